"""Forward and backward passes for every layer in the workbench.

Conventions:
  - images are [N, C, H, W]; dense activations are [N, D]
  - forward functions return (output, cache); the matching *_backward takes
    (grad_out, cache) and returns gradients in argument order
  - float dtype follows the inputs (float32 in training, float64 in grad
    checks); loss scalars accumulate in float64
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, ValidationError


def _check_image_batch(name: str, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be [N,C,H,W], got shape {tuple(x.shape)}")


# ---------------------------------------------------------------- conv2d


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, padding: int = 0):
    """Stride-1 2-D convolution (cross-correlation) with symmetric padding.

    x: [N,C,H,W], w: [K,C,kh,kw], b: [K] -> y: [N,K,H',W'] where
    H' = H + 2*padding - kh + 1.
    """
    _check_image_batch("conv2d input", x)
    if w.ndim != 4:
        raise ShapeError(f"conv2d kernel must be [K,C,kh,kw], got shape {tuple(w.shape)}")
    n, c, h, wd = x.shape
    k, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input C={c}, kernel C={cw}")
    if b.shape != (k,):
        raise ShapeError(f"conv2d bias must be [{k}], got shape {tuple(b.shape)}")
    hp, wp = h + 2 * padding, wd + 2 * padding
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    ho, wo = hp - kh + 1, wp - kw + 1
    # windows: [N, C, Ho, Wo, kh, kw] -> cols: [N*Ho*Wo, C*kh*kw]
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n * ho * wo, c * kh * kw)
    wmat = w.reshape(k, c * kh * kw)
    y = cols @ wmat.T + b
    y = y.reshape(n, ho, wo, k).transpose(0, 3, 1, 2)
    cache = (cols, wmat, w.shape, x.shape, padding)
    return np.ascontiguousarray(y), cache


def conv2d_backward(dy: np.ndarray, cache):
    """Gradients of conv2d: returns (dx, dw, db)."""
    cols, wmat, wshape, xshape, padding = cache
    k, c, kh, kw = wshape
    n, _, h, wd = xshape
    ho, wo = h + 2 * padding - kh + 1, wd + 2 * padding - kw + 1
    dy2 = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, k)
    db = dy2.sum(axis=0, dtype=dy.dtype)
    dw = (dy2.T @ cols).reshape(wshape)
    # dcols: [N,Ho,Wo,C,kh,kw] -> accumulate back into the padded input
    dcols = (dy2 @ wmat).reshape(n, ho, wo, c, kh, kw)
    dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # [N,C,kh,kw,Ho,Wo]
    dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + ho, j : j + wo] += dcols[:, :, i, j]
    if padding:
        dx = dxp[:, :, padding:-padding, padding:-padding]
    else:
        dx = dxp
    return np.ascontiguousarray(dx), dw, db


# ------------------------------------------------------------- maxpool2x2


def maxpool2x2(x: np.ndarray):
    """Non-overlapping 2x2 max pooling; returns (y, argmax indices 0..3)."""
    _check_image_batch("maxpool2x2 input", x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even H and W, got {h}x{w}")
    ho, wo = h // 2, w // 2
    windows = x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, ho, wo, 4)
    idx = windows.argmax(axis=-1).astype(np.int8)
    y = windows.max(axis=-1)
    return np.ascontiguousarray(y), idx


def maxpool2x2_backward(dy: np.ndarray, idx: np.ndarray):
    """Scatter pooled gradients back to the argmax positions."""
    n, c, ho, wo = dy.shape
    dwin = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None].astype(np.intp), dy[..., None], axis=-1)
    dx = dwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, ho * 2, wo * 2))


# ------------------------------------------------------------------ relu


def relu(x: np.ndarray):
    """Elementwise max(0, x); cache is the positive mask."""
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dy * mask


# ---------------------------------------------------------------- linear


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Affine map x @ w + b for x: [N,D], w: [D,M], b: [M]."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(
            f"linear expects 2-D input/weights, got {tuple(x.shape)} and {tuple(w.shape)}"
        )
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"linear inner dims disagree: input D={x.shape[1]}, weights D={w.shape[0]}"
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear bias must be [{w.shape[1]}], got shape {tuple(b.shape)}")
    return x @ w + b, (x, w)


def linear_backward(dy: np.ndarray, cache):
    x, w = cache
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0, dtype=dy.dtype)
    return dx, dw, db


# --------------------------------------------------------------- softmax


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with log-sum-exp stabilization."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def weighted_softmax_ce(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """Per-sample-weighted cross-entropy.

    loss = sum_i(weights[i] * CE_i) / N, so all-ones weights give the plain
    mean cross-entropy. Returns (loss, probs).
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [N,K], got shape {tuple(logits.shape)}")
    n, k = logits.shape
    labels = np.asarray(labels)
    weights = np.asarray(weights)
    if labels.shape != (n,) or weights.shape != (n,):
        raise ShapeError(
            f"labels/weights must be [{n}], got {tuple(labels.shape)} and {tuple(weights.shape)}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(
            f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]"
        )
    if weights.size and (weights.min() < 0 or weights.max() > 1):
        raise ValidationError("per-sample weights must lie in [0, 1]")
    logp = _log_softmax(logits)
    ce = -logp[np.arange(n), labels]
    loss = float(np.sum(weights.astype(np.float64) * ce.astype(np.float64)) / n)
    return loss, np.exp(logp)


def weighted_softmax_ce_backward(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """d(loss)/d(logits) for weighted_softmax_ce."""
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1
    dlogits *= (np.asarray(weights) / n)[:, None].astype(probs.dtype)
    return dlogits


# --------------------------------------------------------- sigmoid / BCE


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy on raw logits; returns (loss, probs)."""
    if logits.shape != targets.shape:
        raise ShapeError(
            f"bce logits/targets shapes differ: {tuple(logits.shape)} vs {tuple(targets.shape)}"
        )
    t = targets.astype(np.float64)
    z = logits.astype(np.float64)
    # log(1 + e^-|z|) is stable for both signs
    loss_vec = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    loss = float(loss_vec.mean())
    return loss, sigmoid(logits)


def bce_with_logits_backward(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (probs - targets.astype(probs.dtype)) / probs.size


# ---------------------------------------------------------------- dropout


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator, train: bool):
    """Inverted dropout; identity (mask None) when train is False or rate 0."""
    if not 0 <= rate < 1:
        raise ValidationError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    scale = x.dtype.type(1.0 / (1.0 - rate))
    return x * keep * scale, keep * scale


def dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return dy
    return dy * mask
