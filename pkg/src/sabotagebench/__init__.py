"""Data-poisoning defense workbench.

Pipelines for training image classifiers under pixel-inversion sabotage
(baseline, soft reweighting, hard gating, integrated rejection), an adaptive
confidence-threshold controller, embedding-level and textual mirror
self-recognition tests, and the metrics that tie them together.
"""

__version__ = "0.1.0"
