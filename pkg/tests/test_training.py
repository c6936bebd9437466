"""Training pipelines: contracts at tiny scale, detection behavior at medium
scale. The medium battery is the expensive part of the suite; every report it
needs is computed once in a module fixture and shared."""

import math

import numpy as np
import pytest

from sabotagebench.dataset import SabotageConfig
from sabotagebench.errors import ValidationError
from sabotagebench.quarantine import AdaptiveControllerState
from sabotagebench.training import (
    GateTrainConfig,
    PipelineConfig,
    SweepConfig,
    TrainConfig,
    poison_eval_stream,
    pretrain_gate,
    run_sweep,
    train_adaptive,
    train_baseline,
    train_hard,
    train_irm,
    train_soft,
)

from conftest import med_pipeline, tiny_pipeline

REPORT_KEYS = {
    "method",
    "seed",
    "epochs",
    "rejection_rate",
    "accuracy_on_accepted",
    "accepted_empty",
    "starvation_events",
    "train_flag_counts",
    "extras",
    "detection",
}


class TestConfigValidation:
    def test_train_config(self):
        with pytest.raises(ValidationError, match="epochs"):
            TrainConfig(epochs=0)
        with pytest.raises(ValidationError, match="batch_size"):
            TrainConfig(batch_size=0)
        with pytest.raises(ValidationError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)

    def test_gate_config(self):
        with pytest.raises(ValidationError, match="body_epochs"):
            GateTrainConfig(body_epochs=0)
        with pytest.raises(ValidationError, match="logit_cap"):
            GateTrainConfig(logit_cap=0.0)

    def test_pipeline_config(self):
        with pytest.raises(ValidationError, match="method"):
            tiny_pipeline("bayesian")
        with pytest.raises(ValidationError, match="reject"):
            tiny_pipeline("irm", sabotage=SabotageConfig(rate=0.05, label_mode="random"))
        with pytest.raises(ValidationError, match="hard_cutoff"):
            tiny_pipeline("hard", hard_cutoff="median")
        with pytest.raises(ValidationError, match="quantile"):
            tiny_pipeline("hard", hard_auto_quantile=1.0)


@pytest.fixture(scope="module")
def tiny_baseline_report(tiny_train, tiny_test):
    return train_baseline(tiny_pipeline("baseline"), tiny_train, tiny_test)


@pytest.fixture(scope="module")
def tiny_gate_asset(tiny_train):
    return pretrain_gate(tiny_pipeline("hard"), tiny_train)


class TestBaseline:
    def test_report_shape(self, tiny_baseline_report):
        report = tiny_baseline_report
        assert report.method == "baseline"
        assert len(report.epochs) == 1
        assert 0.0 <= report.epochs[0].test_error <= 1.0
        assert report.rejection_rate == 0.0
        assert report.detection.recall == 0.0
        assert not report.accepted_empty
        assert set(report.to_json_dict()) == REPORT_KEYS

    def test_same_seed_reproduces_bitwise(self, tiny_train, tiny_test, tiny_baseline_report):
        again = train_baseline(tiny_pipeline("baseline"), tiny_train, tiny_test)
        assert again.extras["model_checksum"] == tiny_baseline_report.extras["model_checksum"]
        assert again.to_json_dict() == tiny_baseline_report.to_json_dict()

    def test_different_seed_differs(self, tiny_train, tiny_test, tiny_baseline_report):
        other = train_baseline(tiny_pipeline("baseline", seed=1), tiny_train, tiny_test)
        assert other.extras["model_checksum"] != tiny_baseline_report.extras["model_checksum"]


class TestGatePretraining:
    def test_damping_caps_scores_below_flag_region(self, tiny_gate_asset):
        # sigmoid(logit_cap)^2 < 0.5 means no soft weight can clear the flag
        # threshold while confidence sits at 1, which is the whole design
        assert tiny_gate_asset.max_score <= math.sqrt(0.5) + 1e-9
        assert 0.0 < tiny_gate_asset.damping_scale <= 1.0

    def test_separation_stats_populated(self, tiny_gate_asset):
        assert 0.0 < tiny_gate_asset.clean_score_mean < 1.0
        assert 0.0 < tiny_gate_asset.sabotaged_score_mean < 1.0
        assert tiny_gate_asset.body_checksum

    def test_gate_is_deterministic(self, tiny_train, tiny_gate_asset):
        again = pretrain_gate(tiny_pipeline("hard"), tiny_train)
        assert again.gate.params.checksum() == tiny_gate_asset.gate.params.checksum()


class TestSoftPipeline:
    def test_unit_weights_reduce_to_baseline_bitwise(
        self, tiny_train, tiny_test, tiny_gate_asset, tiny_baseline_report
    ):
        cfg = tiny_pipeline("soft", force_unit_weights=True)
        report = train_soft(cfg, tiny_train, tiny_test, tiny_gate_asset)
        assert report.extras["model_checksum"] == tiny_baseline_report.extras["model_checksum"]

    def test_degenerate_full_rejection_row(self, tiny_train, tiny_test, tiny_gate_asset):
        report = train_soft(tiny_pipeline("soft"), tiny_train, tiny_test, tiny_gate_asset)
        d = report.detection
        assert report.rejection_rate == 1.0
        assert report.accepted_empty is True
        assert report.accuracy_on_accepted == 0.0
        assert d.recall == 1.0
        counts = d.counts
        assert d.precision == pytest.approx((counts.tp + counts.fn) / counts.total)

    def test_log_rows_track_cumulative_epoch_fraction(
        self, tiny_train, tiny_test, tiny_gate_asset
    ):
        report = train_soft(tiny_pipeline("soft"), tiny_train, tiny_test, tiny_gate_asset)
        last = report.log_rows[-1]
        epoch_rows = [r for r in report.log_rows if r.epoch == last.epoch]
        flagged = sum(r.flagged_count for r in epoch_rows)
        assert last.f_avg == pytest.approx(flagged / tiny_train.count)
        assert [r.batch for r in epoch_rows] == list(range(len(epoch_rows)))


class TestHardPipeline:
    def test_cutoff_zero_reduces_to_baseline_bitwise(
        self, tiny_train, tiny_test, tiny_gate_asset, tiny_baseline_report
    ):
        cfg = tiny_pipeline("hard", hard_cutoff=0.0)
        report = train_hard(cfg, tiny_train, tiny_test, tiny_gate_asset)
        assert report.extras["model_checksum"] == tiny_baseline_report.extras["model_checksum"]
        assert report.starvation_events == 0

    def test_auto_cutoff_pins_rejection_to_quantile(
        self, tiny_train, tiny_test, tiny_gate_asset
    ):
        report = train_hard(tiny_pipeline("hard"), tiny_train, tiny_test, tiny_gate_asset)
        fractions = [
            row.flagged_count / (64 if row.batch < 18 else tiny_train.count - 18 * 64)
            for row in report.log_rows
        ]
        assert 0.55 <= np.mean(fractions) <= 0.75
        assert 0.55 <= report.rejection_rate <= 0.75
        assert report.extras["hard_cutoff"] == "auto(q=0.65)"

    def test_impossible_cutoff_starves_every_batch(
        self, tiny_train, tiny_test, tiny_gate_asset
    ):
        cfg = tiny_pipeline("hard", hard_cutoff=1.0)
        report = train_hard(cfg, tiny_train, tiny_test, tiny_gate_asset)
        n_batches = math.ceil(tiny_train.count / 64)
        assert report.starvation_events == n_batches
        assert report.epochs[0].train_error == 1.0
        assert report.accepted_empty is True


class TestIrmPipeline:
    def test_rejection_via_extra_class(self, tiny_train, tiny_test):
        report = train_irm(tiny_pipeline("irm"), tiny_train, tiny_test)
        assert report.method == "irm"
        assert report.extras["reject_class"] == 10
        counts = report.detection.counts
        assert report.rejection_rate == pytest.approx(
            (counts.tp + counts.fp) / counts.total
        )


class TestEvalStream:
    def test_poison_eval_stream_deterministic(self, tiny_test):
        sab = SabotageConfig(rate=0.05)
        a = poison_eval_stream(tiny_test, sab, seed=3)
        b = poison_eval_stream(tiny_test, sab, seed=3)
        c = poison_eval_stream(tiny_test, sab, seed=4)
        np.testing.assert_array_equal(a.mask, b.mask)
        assert not np.array_equal(a.mask, c.mask)


@pytest.fixture(scope="module")
def sweep_result(tiny_train, tiny_test):
    cfg = tiny_pipeline("baseline")
    return run_sweep(cfg, SweepConfig(thresholds=(0.1, 0.3), epochs=1), tiny_train, tiny_test)


class TestSweepTiny:
    def test_table_shape(self, sweep_result):
        rows = sweep_result["rows"]
        assert [row["threshold"] for row in rows] == [0.1, 0.3]
        for row in rows:
            assert set(row) == {
                "threshold",
                "final_train_error",
                "final_test_error",
                "flagged_count",
                "sabotaged_count",
                "precision",
                "recall",
                "starvation_events",
                "rejection_rate",
                "accuracy_on_accepted",
                "accepted_empty",
            }

    def test_thresholds_see_identical_sabotage(self, sweep_result):
        a, b = sweep_result["reports"]
        assert [r.sabotaged_count for r in a.log_rows] == [
            r.sabotaged_count for r in b.log_rows
        ]

    def test_higher_threshold_flags_at_least_as_much(self, sweep_result):
        rows = sweep_result["rows"]
        assert rows[1]["flagged_count"] >= rows[0]["flagged_count"]

    def test_validation(self, tiny_train, tiny_test):
        with pytest.raises(ValidationError, match="epochs"):
            SweepConfig(epochs=0)
        with pytest.raises(ValidationError, match="strictly increasing"):
            run_sweep(
                tiny_pipeline("baseline"),
                SweepConfig(thresholds=(0.3, 0.2)),
                tiny_train,
                tiny_test,
            )


class TestAdaptiveTiny:
    def test_controller_steers_within_clamp(self, tiny_train, tiny_test):
        state = AdaptiveControllerState(tau=0.30, delta=0.01, tau_min=0.05, tau_max=0.95)
        report = train_adaptive(tiny_pipeline("baseline"), tiny_train, tiny_test, state)
        assert report.method == "adaptive"
        taus = [row.tau for row in report.log_rows]
        assert all(0.05 <= t <= 0.95 for t in taus)
        steps = np.abs(np.diff(taus))
        assert steps.max() <= 0.01 + 1e-12
        assert report.extras["tau_final"] == pytest.approx(taus[-1], abs=0.011)


# ---------------------------------------------------------------- medium


@pytest.fixture(scope="module")
def med_hard_report(med_train, med_test, med_gate_asset):
    return train_hard(med_pipeline("hard"), med_train, med_test, med_gate_asset)


@pytest.fixture(scope="module")
def med_irm_report(med_train, med_test):
    return train_irm(med_pipeline("irm"), med_train, med_test)


@pytest.fixture(scope="module")
def med_adaptive_report(med_train, med_test):
    return train_adaptive(med_pipeline("baseline"), med_train, med_test)


@pytest.mark.slow
class TestMediumScale:
    def test_gate_orders_clean_above_sabotaged(self, med_gate_asset):
        assert med_gate_asset.clean_score_mean > med_gate_asset.sabotaged_score_mean
        assert med_gate_asset.max_score <= math.sqrt(0.5) + 1e-9

    def test_hard_catches_most_sabotage(self, med_hard_report):
        d = med_hard_report.detection
        assert d.recall >= 0.7
        assert 0.55 <= med_hard_report.rejection_rate <= 0.75
        assert med_hard_report.accuracy_on_accepted >= 0.8

    def test_irm_routes_sabotage_to_reject_class(self, med_irm_report):
        d = med_irm_report.detection
        assert 0.02 <= med_irm_report.rejection_rate <= 0.15
        assert d.precision >= 0.7
        assert d.recall >= 0.7
        assert med_irm_report.accuracy_on_accepted >= 0.8

    def test_irm_learns_the_clean_task_too(self, med_irm_report):
        assert med_irm_report.epochs[-1].test_error <= 0.2

    def test_adaptive_settles_into_band(self, med_adaptive_report):
        rows = med_adaptive_report.log_rows
        second_half = rows[len(rows) // 2 :]
        f_avg = np.mean([r.flagged_count / 64 for r in second_half if r.batch < 93])
        assert 0.03 <= f_avg <= 0.20
        assert 0.05 <= med_adaptive_report.extras["tau_final"] <= 0.95
