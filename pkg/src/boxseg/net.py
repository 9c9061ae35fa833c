"""Minimal differentiable point network with hand-written reverse-mode gradients.

Architecture: a shared per-point affine+ReLU stack, an optional local-context
step that concatenates each point's feature with the mean feature of its k
nearest neighbors (computed once from the input coordinates), a global
average pooled classification head, and a per-point segmentation head whose
logits double as the attention map through a sigmoid.

Everything is float64 and deterministic given (parameters, input); gradients
are exact, which the tests verify against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Optional

import numpy as np

LOG_EPS = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def knn_indices(xyz: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Exact brute-force k-nearest-neighbor indices (self excluded), (N, k) int64.

    For a single-point cloud the point is its own neighbor so downstream means
    stay well-defined; when fewer than k neighbors exist the available ones
    repeat deterministically.
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = xyz.shape[0]
    if n == 1:
        return np.zeros((1, max(k, 1)), dtype=np.int64)
    k_eff = min(k, n - 1)
    sq = np.sum(xyz * xyz, axis=1)
    out = np.empty((n, k_eff), dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (xyz[lo:hi] @ xyz.T)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        part = np.argpartition(d2, k_eff - 1, axis=1)[:, :k_eff]
        rows = np.arange(hi - lo)[:, None]
        order = np.argsort(d2[rows, part], axis=1, kind="stable")
        out[lo:hi] = part[rows, order]
    if k_eff < k:
        out = np.concatenate([out] + [out[:, -1:]] * (k - k_eff), axis=1)
    return out


@dataclass
class ForwardCache:
    """Per-pass activations kept for backprop."""

    x: np.ndarray
    neighbors: Optional[np.ndarray]
    pre: list[np.ndarray]  # pre-activations per encoder layer
    post: list[np.ndarray]  # post-ReLU activations per encoder layer
    context_input: Optional[np.ndarray]  # activation that fed the context concat
    f_cam: np.ndarray  # (N, F) final per-point features
    gap: np.ndarray  # (F,) mean feature
    class_logits: np.ndarray  # (C,)
    seg_logits: np.ndarray  # (N, C) = Z
    attention: np.ndarray  # (N, C) = sigmoid(Z)
    probs: np.ndarray  # (N, C) = softmax(Z) rows


class PointNetLite:
    """Tiny per-point MLP encoder with classification and segmentation heads."""

    def __init__(
        self,
        classes: int,
        in_dim: int = 3,
        hidden: tuple[int, ...] = (32, 64, 64),
        context: bool = True,
        context_k: int = 8,
        context_after: int = 2,
        seed: int = 0,
    ):
        if classes < 1:
            raise ValueError("need at least one class")
        if not hidden:
            raise ValueError("need at least one hidden layer")
        if context and not (1 <= context_after <= len(hidden)):
            raise ValueError("context insertion point out of range")
        self.classes = classes
        self.in_dim = in_dim
        self.hidden = tuple(int(h) for h in hidden)
        self.context = bool(context)
        self.context_k = int(context_k)
        self.context_after = int(context_after)

        rng = np.random.default_rng(seed)
        dims = [in_dim]
        for i, h in enumerate(self.hidden):
            dims.append(h)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for i, h in enumerate(self.hidden):
            fan_in = dims[i]
            if self.context and i == self.context_after:
                fan_in *= 2
            self.W.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, h)))
            self.b.append(np.full(h, 0.01))
        feat = self.hidden[-1]
        if self.context and self.context_after == len(self.hidden):
            feat *= 2
        self.feature_dim = feat
        self.W_cls = rng.normal(0.0, math.sqrt(1.0 / feat), size=(feat, classes))
        self.b_cls = np.zeros(classes)
        self.W_seg = rng.normal(0.0, math.sqrt(1.0 / feat), size=(feat, classes))
        self.b_seg = np.zeros(classes)

    # ------------------------------------------------------------------ params

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for i in range(len(self.hidden)):
            items.append(("W%d" % i, self.W[i]))
            items.append(("b%d" % i, self.b[i]))
        items.append(("W_cls", self.W_cls))
        items.append(("b_cls", self.b_cls))
        items.append(("W_seg", self.W_seg))
        items.append(("b_seg", self.b_seg))
        return items

    @property
    def num_params(self) -> int:
        return sum(a.size for _, a in self.param_items())

    def params_flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.param_items()])

    def set_params_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        pos = 0
        for _, a in self.param_items():
            a[...] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != vec.size:
            raise ValueError("parameter vector length mismatch")

    # ----------------------------------------------------------------- forward

    def forward(self, x: np.ndarray, neighbors: Optional[np.ndarray] = None) -> ForwardCache:
        """Run the network on (N, in_dim) inputs; returns activations and heads.

        Raises on non-finite activations, which signals exploded parameters.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.in_dim)
        if x.shape[0] == 0:
            raise ValueError("forward needs at least one point")
        if self.context and neighbors is None:
            neighbors = knn_indices(x[:, :3], self.context_k)

        h = x
        pre: list[np.ndarray] = []
        post: list[np.ndarray] = []
        context_input = None
        for i in range(len(self.hidden)):
            if self.context and i == self.context_after:
                context_input = h
                h = np.concatenate([h, h[neighbors].mean(axis=1)], axis=1)
            a = h @ self.W[i] + self.b[i]
            pre.append(a)
            h = np.maximum(a, 0.0)
            post.append(h)
        if self.context and self.context_after == len(self.hidden):
            context_input = h
            h = np.concatenate([h, h[neighbors].mean(axis=1)], axis=1)
        f_cam = h

        if not np.all(np.isfinite(f_cam)):
            raise FloatingPointError("non-finite activation in forward pass")

        gap = f_cam.mean(axis=0)
        class_logits = gap @ self.W_cls + self.b_cls
        z = f_cam @ self.W_seg + self.b_seg
        s = _sigmoid(z)
        zmax = z.max(axis=1, keepdims=True)
        ez = np.exp(z - zmax)
        y = ez / ez.sum(axis=1, keepdims=True)
        return ForwardCache(
            x=x,
            neighbors=neighbors,
            pre=pre,
            post=post,
            context_input=context_input,
            f_cam=f_cam,
            gap=gap,
            class_logits=class_logits,
            seg_logits=z,
            attention=s,
            probs=y,
        )

    # ---------------------------------------------------------------- backward

    def backward(
        self,
        cache: ForwardCache,
        d_seg_logits: Optional[np.ndarray] = None,
        d_class_logits: Optional[np.ndarray] = None,
    ) -> dict[str, np.ndarray]:
        """Exact gradients of a loss given its gradients at the two heads."""
        n = cache.f_cam.shape[0]
        grads = {name: np.zeros_like(a) for name, a in self.param_items()}
        df = np.zeros_like(cache.f_cam)

        if d_seg_logits is not None:
            dz = np.asarray(d_seg_logits, dtype=np.float64)
            grads["W_seg"] += cache.f_cam.T @ dz
            grads["b_seg"] += dz.sum(axis=0)
            df += dz @ self.W_seg.T
        if d_class_logits is not None:
            dl = np.asarray(d_class_logits, dtype=np.float64).reshape(-1)
            grads["W_cls"] += np.outer(cache.gap, dl)
            grads["b_cls"] += dl
            dgap = self.W_cls @ dl
            df += dgap[None, :] / n

        dh = df
        if self.context and self.context_after == len(self.hidden):
            dh = self._context_backward(dh, cache.neighbors)
        for i in reversed(range(len(self.hidden))):
            da = dh * (cache.pre[i] > 0)
            h_in = self._layer_input(cache, i)
            grads["W%d" % i] += h_in.T @ da
            grads["b%d" % i] += da.sum(axis=0)
            dh = da @ self.W[i].T
            if self.context and i == self.context_after:
                dh = self._context_backward(dh, cache.neighbors)
        return grads

    def _layer_input(self, cache: ForwardCache, i: int) -> np.ndarray:
        base = cache.x if i == 0 else cache.post[i - 1]
        if self.context and i == self.context_after:
            return np.concatenate(
                [base, base[cache.neighbors].mean(axis=1)], axis=1
            )
        return base

    def _context_backward(self, dcat: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
        f = dcat.shape[1] // 2
        dh = dcat[:, :f].copy()
        k = neighbors.shape[1]
        dmean = dcat[:, f:] / k
        # Transpose of the neighbor-mean gather as a grouped segment sum.
        flat = neighbors.ravel()
        order = np.argsort(flat, kind="stable")
        sorted_idx = flat[order]
        contrib = np.repeat(dmean, k, axis=0)[order]
        starts = np.nonzero(np.diff(sorted_idx, prepend=sorted_idx[0] - 1))[0]
        dh[sorted_idx[starts]] += np.add.reduceat(contrib, starts, axis=0)
        return dh

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, a in self.param_items():
            a -= lr * grads[name]

    # ------------------------------------------------------------- persistence

    def save(self, stream: IO[str]) -> None:
        stream.write("NET v1\n")
        stream.write("in_dim %d\n" % self.in_dim)
        stream.write("hidden %s\n" % " ".join(str(h) for h in self.hidden))
        stream.write("classes %d\n" % self.classes)
        stream.write(
            "context %d %d %d\n" % (int(self.context), self.context_k, self.context_after)
        )
        for name, a in self.param_items():
            shape = " ".join(str(s) for s in a.shape)
            stream.write("param %s %s\n" % (name, shape))
            flat = a.ravel()
            for v in flat:
                stream.write(repr(float(v)))
                stream.write("\n")

    @staticmethod
    def load(stream: IO[str]) -> "PointNetLite":
        lines = [ln.strip() for ln in stream if ln.strip()]
        if not lines or lines[0] != "NET v1":
            raise ValueError("not a NET v1 checkpoint")
        meta: dict[str, list[str]] = {}
        pos = 1
        while pos < len(lines) and not lines[pos].startswith("param "):
            parts = lines[pos].split()
            meta[parts[0]] = parts[1:]
            pos += 1
        net = PointNetLite(
            classes=int(meta["classes"][0]),
            in_dim=int(meta["in_dim"][0]),
            hidden=tuple(int(h) for h in meta["hidden"]),
            context=bool(int(meta["context"][0])),
            context_k=int(meta["context"][1]),
            context_after=int(meta["context"][2]),
        )
        for name, a in net.param_items():
            header = lines[pos].split()
            if header[0] != "param" or header[1] != name:
                raise ValueError("checkpoint parameter order mismatch at %r" % lines[pos])
            shape = tuple(int(s) for s in header[2:])
            if shape != a.shape:
                raise ValueError("checkpoint shape mismatch for %s" % name)
            pos += 1
            vals = [float(lines[pos + i]) for i in range(a.size)]
            pos += a.size
            a[...] = np.array(vals).reshape(shape)
        return net


# --------------------------------------------------------------------- losses


def sigmoid_ce_loss(class_logits: np.ndarray, tag: np.ndarray) -> tuple[float, np.ndarray]:
    """Multi-label sigmoid cross-entropy; returns (loss, gradient wrt logits).

    Computed in the log-sum-exp form softplus so large logits cannot overflow.
    """
    z = np.asarray(class_logits, dtype=np.float64).reshape(-1)
    y = np.asarray(tag, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ValueError("logit/tag length mismatch")
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    loss = float(np.sum(y * (softplus - z) + (1.0 - y) * softplus))
    sig = _sigmoid(z)
    return loss, sig - y


def segmentation_ce(
    probs: np.ndarray, labels: np.ndarray, sentinel: int = 255
) -> tuple[float, np.ndarray, int]:
    """Mean softmax cross-entropy over labeled points.

    Returns (loss, gradient wrt seg logits, contributing point count); points
    whose label equals the sentinel contribute nothing.
    """
    y = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    mask = labels != sentinel
    n = int(np.count_nonzero(mask))
    dz = np.zeros_like(y)
    if n == 0:
        return 0.0, dz, 0
    idx = np.nonzero(mask)[0]
    cls = labels[idx].astype(np.int64)
    p = y[idx, cls]
    clamped = p < LOG_EPS
    loss = float(-np.log(np.maximum(p, LOG_EPS)).sum() / n)
    rows = y[idx] / n
    rows[np.arange(idx.size), cls] -= 1.0 / n
    rows[clamped] = 0.0  # clamped log has zero derivative
    dz[idx] = rows
    return loss, dz, n


def attention_ce(
    attention: np.ndarray,
    probs: np.ndarray,
    box_mask: np.ndarray,
    flow_through_attention: bool = True,
) -> tuple[float, np.ndarray]:
    """Attention-modulated cross-entropy against one-hot box masks.

    loss = -mean_p sum_c S[p, c] * log(Y[p, c]) * B[p, c] with B one-hot rows.
    The returned gradient is with respect to the shared seg logits Z, where
    S = sigmoid(Z) and Y = softmax(Z); attention participates in the gradient
    unless flow_through_attention is False.
    """
    s = np.asarray(attention, dtype=np.float64)
    y = np.asarray(probs, dtype=np.float64)
    b = np.asarray(box_mask, dtype=np.float64)
    if s.shape != y.shape or s.shape != b.shape:
        raise ValueError("attention loss shape mismatch")
    n = s.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(s)
    k = np.argmax(b, axis=1)
    rows = np.arange(n)
    y_k = y[rows, k]
    log_y = np.log(np.maximum(y_k, LOG_EPS))
    s_k = s[rows, k]
    loss = float(-(s_k * log_y).sum() / n)

    dz = np.zeros_like(s)
    clamped = y_k < LOG_EPS
    # d/dZ_c of -S_k log Y_k: softmax term S_k (delta - Y_c), plus the sigmoid
    # path delta * S_k (1 - S_k) log Y_k when gradients flow through S.
    soft = s_k[:, None] * (-y)
    soft[rows, k] += s_k
    soft[clamped] = 0.0
    dz -= soft / n
    if flow_through_attention:
        dz[rows, k] -= s_k * (1.0 - s_k) * log_y / n
    return loss, dz
