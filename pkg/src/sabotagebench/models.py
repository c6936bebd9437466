"""Network definitions.

SimpleCNN: conv1 -> ReLU -> conv2 -> ReLU -> maxpool2x2 -> fc1 -> ReLU -> fc2.
The "small path" replaces conv2 with a 1x1 channel projection when the
caller's estimated sabotage fraction exceeds the configured trigger; both
paths produce identically shaped activations. The mid-layer tap (gate input
and mirror-test embedding) is the post-pool activation tensor.

The integrated rejection variant is the same backbone with an (n+1)-way head;
class n is the rejection class.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nncore import (
    ParamSet,
    conv2d,
    conv2d_backward,
    dropout,
    dropout_backward,
    fan_in_uniform,
    linear,
    linear_backward,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    require_finite,
    sigmoid,
)


@dataclass
class ModelConfig:
    n_classes: int = 10
    in_channels: int = 1
    conv1_channels: int = 16
    conv2_channels: int = 32
    kernel_size: int = 3
    padding: int = 1
    fc_hidden: int = 128
    image_size: int = 28
    small_path_trigger: float = 0.10

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")
        if not 0 <= self.small_path_trigger <= 1:
            raise ValidationError(
                f"small_path_trigger must lie in [0, 1], got {self.small_path_trigger}"
            )
        if self.kernel_size != 2 * self.padding + 1:
            raise ValidationError(
                "kernel_size must equal 2*padding + 1 so conv layers preserve "
                f"spatial size, got k={self.kernel_size}, padding={self.padding}"
            )
        if self.image_size % 2:
            raise ValidationError(f"image_size must be even, got {self.image_size}")

    @property
    def pooled_size(self) -> int:
        return self.image_size // 2

    @property
    def feature_dim(self) -> int:
        """Flattened mid-layer width (post-conv2 + pool)."""
        return self.conv2_channels * self.pooled_size * self.pooled_size


class SimpleCNN:
    """Two-conv CNN with an optional conv2 bypass and a linear head.

    `n_outputs` defaults to the class count; the integrated rejection model
    passes n_classes + 1. Forward is pure (cache returned to the caller);
    backward accumulates gradients into the ParamSet.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, n_outputs: int | None = None):
        self.cfg = cfg
        self.n_outputs = cfg.n_classes if n_outputs is None else int(n_outputs)
        k = cfg.kernel_size
        params = ParamSet()
        fan1 = cfg.in_channels * k * k
        params.add("conv1_w", fan_in_uniform(rng, (cfg.conv1_channels, cfg.in_channels, k, k), fan1))
        params.add("conv1_b", fan_in_uniform(rng, (cfg.conv1_channels,), fan1))
        fan2 = cfg.conv1_channels * k * k
        params.add("conv2_w", fan_in_uniform(rng, (cfg.conv2_channels, cfg.conv1_channels, k, k), fan2))
        params.add("conv2_b", fan_in_uniform(rng, (cfg.conv2_channels,), fan2))
        fanb = cfg.conv1_channels
        params.add("bypass_w", fan_in_uniform(rng, (cfg.conv2_channels, cfg.conv1_channels, 1, 1), fanb))
        params.add("bypass_b", fan_in_uniform(rng, (cfg.conv2_channels,), fanb))
        feat = cfg.feature_dim
        params.add("fc1_w", fan_in_uniform(rng, (feat, cfg.fc_hidden), feat))
        params.add("fc1_b", fan_in_uniform(rng, (cfg.fc_hidden,), feat))
        params.add("fc2_w", fan_in_uniform(rng, (cfg.fc_hidden, self.n_outputs), cfg.fc_hidden))
        params.add("fc2_b", fan_in_uniform(rng, (self.n_outputs,), cfg.fc_hidden))
        self.params = params

    def forward(self, x: np.ndarray, sabotage_fraction: float = 0.0):
        """Return (logits [N,n_outputs], midlayer [N,C2,H/2,W/2], cache)."""
        p = self.params
        small_path = sabotage_fraction > self.cfg.small_path_trigger
        h1, c_conv1 = conv2d(x, p["conv1_w"].value, p["conv1_b"].value, self.cfg.padding)
        require_finite("conv1", h1)
        a1, m_relu1 = relu(h1)
        if small_path:
            h2, c_conv2 = conv2d(a1, p["bypass_w"].value, p["bypass_b"].value, 0)
            require_finite("bypass", h2)
        else:
            h2, c_conv2 = conv2d(a1, p["conv2_w"].value, p["conv2_b"].value, self.cfg.padding)
            require_finite("conv2", h2)
        a2, m_relu2 = relu(h2)
        mid, idx_pool = maxpool2x2(a2)
        n = x.shape[0]
        flat = mid.reshape(n, -1)
        f1, c_fc1 = linear(flat, p["fc1_w"].value, p["fc1_b"].value)
        require_finite("fc1", f1)
        a3, m_relu3 = relu(f1)
        logits, c_fc2 = linear(a3, p["fc2_w"].value, p["fc2_b"].value)
        require_finite("fc2", logits)
        cache = {
            "small_path": small_path,
            "conv1": c_conv1,
            "relu1": m_relu1,
            "conv2": c_conv2,
            "relu2": m_relu2,
            "pool_idx": idx_pool,
            "mid_shape": mid.shape,
            "fc1": c_fc1,
            "relu3": m_relu3,
            "fc2": c_fc2,
        }
        return logits, mid, cache

    def backward(self, dlogits: np.ndarray, cache) -> None:
        """Accumulate parameter gradients for one forward pass."""
        p = self.params
        da3, dw, db = linear_backward(dlogits, cache["fc2"])
        p["fc2_w"].grad += dw
        p["fc2_b"].grad += db
        df1 = relu_backward(da3, cache["relu3"])
        dflat, dw, db = linear_backward(df1, cache["fc1"])
        p["fc1_w"].grad += dw
        p["fc1_b"].grad += db
        dmid = dflat.reshape(cache["mid_shape"])
        da2 = maxpool2x2_backward(dmid, cache["pool_idx"])
        dh2 = relu_backward(da2, cache["relu2"])
        da1, dw, db = conv2d_backward(dh2, cache["conv2"])
        if cache["small_path"]:
            p["bypass_w"].grad += dw
            p["bypass_b"].grad += db
        else:
            p["conv2_w"].grad += dw
            p["conv2_b"].grad += db
        dh1 = relu_backward(da1, cache["relu1"])
        _, dw, db = conv2d_backward(dh1, cache["conv1"])
        p["conv1_w"].grad += dw
        p["conv1_b"].grad += db


def make_irm_model(cfg: ModelConfig, rng: np.random.Generator) -> SimpleCNN:
    """Same backbone with n_classes + 1 outputs; class n rejects."""
    return SimpleCNN(cfg, rng, n_outputs=cfg.n_classes + 1)


def extract_embeddings(model: SimpleCNN, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Flattened post-pool mid-layer activations; never mutates parameters."""
    out = []
    for start in range(0, images.shape[0], batch_size):
        _, mid, _ = model.forward(images[start : start + batch_size])
        out.append(mid.reshape(mid.shape[0], -1))
    return np.concatenate(out, axis=0)


# -------------------------------------------------------------------- gate


@dataclass
class GateConfig:
    input_dim: int
    hidden: int = 128
    dropout: float = 0.3

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValidationError(f"gate input_dim must be >= 1, got {self.input_dim}")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"gate dropout must lie in [0, 1), got {self.dropout}")


class MlpBinary:
    """flatten -> hidden ReLU -> dropout (train only) -> sigmoid scalar."""

    def __init__(self, cfg: GateConfig, rng: np.random.Generator):
        self.cfg = cfg
        params = ParamSet()
        params.add("w1", fan_in_uniform(rng, (cfg.input_dim, cfg.hidden), cfg.input_dim))
        params.add("b1", fan_in_uniform(rng, (cfg.hidden,), cfg.input_dim))
        params.add("w2", fan_in_uniform(rng, (cfg.hidden, 1), cfg.hidden))
        params.add("b2", fan_in_uniform(rng, (1,), cfg.hidden))
        self.params = params

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        """Return (scores in [0,1], logits, cache) for flattened inputs [N,D]."""
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise ValidationError(
                f"gate input must be [N,{self.cfg.input_dim}], got shape {tuple(x.shape)}"
            )
        p = self.params
        h, c1 = linear(x, p["w1"].value, p["b1"].value)
        a, mask = relu(h)
        if train and self.cfg.dropout > 0 and rng is None:
            raise ValidationError("training-mode gate forward needs an rng for dropout")
        d, dmask = dropout(a, self.cfg.dropout, rng, train)
        z, c2 = linear(d, p["w2"].value, p["b2"].value)
        logits = z[:, 0]
        require_finite("gate", logits)
        cache = {"fc1": c1, "relu": mask, "drop": dmask, "fc2": c2}
        return sigmoid(logits), logits, cache

    def backward(self, dlogits: np.ndarray, cache) -> None:
        p = self.params
        dz = dlogits[:, None]
        dd, dw, db = linear_backward(dz, cache["fc2"])
        p["w2"].grad += dw
        p["b2"].grad += db
        da = dropout_backward(dd, cache["drop"])
        dh = relu_backward(da, cache["relu"])
        _, dw, db = linear_backward(dh, cache["fc1"])
        p["w1"].grad += dw
        p["b1"].grad += db


Gate = MlpBinary
