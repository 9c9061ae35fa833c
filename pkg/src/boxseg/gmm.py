"""Diagonal-covariance Gaussian mixture fitting with EM and k-means++ seeding.

Variances are floored, and the floor is applied as the exact maximizer of the
M-step over the constrained parameter set, so the log-likelihood sequence is
non-decreasing up to float round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VAR_FLOOR = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GMM:
    """Mixture of K axis-aligned Gaussians over D-dimensional features."""

    weights: np.ndarray  # (K,), nonnegative, sums to 1
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D), >= VAR_FLOOR
    log_likelihood_path: list[float] = field(default_factory=list)

    @property
    def num_components(self) -> int:
        return int(self.weights.shape[0])

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        """(N, K) log of weight_k * N(x | mean_k, var_k)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = x.shape[1]
        diff = x[:, None, :] - self.means[None, :, :]
        maha = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        log_norm = -0.5 * (d * _LOG_2PI + np.sum(np.log(self.variances), axis=1))
        return np.log(np.maximum(self.weights, 1e-300))[None, :] + log_norm[None, :] - 0.5 * maha

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """(N,) log mixture density via logsumexp over components."""
        lp = self.component_log_density(x)
        m = lp.max(axis=1, keepdims=True)
        return (m + np.log(np.sum(np.exp(lp - m), axis=1, keepdims=True))).reshape(-1)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((x - x[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0:
            # All remaining points coincide with a chosen center; pick uniformly.
            centers.append(int(rng.integers(n)))
        else:
            r = rng.random() * total
            centers.append(int(np.searchsorted(np.cumsum(d2), r)))
        d2 = np.minimum(d2, np.sum((x - x[centers[-1]]) ** 2, axis=1))
    return x[np.array(centers, dtype=np.int64)].copy()


def fit_gmm(
    features: np.ndarray,
    k: int,
    max_iters: int = 50,
    seed: int | np.random.Generator = 0,
    var_floor: float = VAR_FLOOR,
) -> GMM:
    """Fit a K-component diagonal GMM by EM; requires at least K samples.

    The returned model records the per-iteration total log-likelihood in
    log_likelihood_path (initial model first), non-decreasing within 1e-9.
    """
    x = np.asarray(features, dtype=np.float64)
    x = np.atleast_2d(x)
    if x.ndim != 2:
        raise ValueError("features must be 2-D")
    n, d = x.shape
    if k < 1:
        raise ValueError("component count must be >= 1")
    if n < k:
        raise ValueError("need at least %d samples to fit %d components, got %d" % (k, k, n))

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = _kmeanspp_centers(x, k, rng)
    d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    assign = np.argmin(d2, axis=1)

    weights = np.zeros(k)
    means = np.zeros((k, d))
    variances = np.full((k, d), var_floor)
    global_var = np.maximum(x.var(axis=0), var_floor)
    for c in range(k):
        mask = assign == c
        cnt = int(np.count_nonzero(mask))
        weights[c] = max(cnt, 1e-12)
        if cnt > 0:
            means[c] = x[mask].mean(axis=0)
            variances[c] = np.maximum(x[mask].var(axis=0), var_floor)
        else:
            means[c] = centers[c]
            variances[c] = global_var
    weights /= weights.sum()

    model = GMM(weights=weights, means=means, variances=variances)
    path = [float(model.log_density(x).sum())]

    for _ in range(max_iters):
        # E-step: responsibilities via stable softmax over component log densities.
        lp = model.component_log_density(x)
        m = lp.max(axis=1, keepdims=True)
        p = np.exp(lp - m)
        resp = p / p.sum(axis=1, keepdims=True)

        # M-step: closed-form maximizers with the variance floor as a constraint.
        nk = resp.sum(axis=0)
        new_w = model.weights.copy()
        new_mu = model.means.copy()
        new_var = model.variances.copy()
        for c in range(k):
            if nk[c] < 1e-12:
                continue  # degenerate component: keep previous parameters
            new_mu[c] = resp[:, c] @ x / nk[c]
            diff2 = (x - new_mu[c]) ** 2
            new_var[c] = np.maximum(resp[:, c] @ diff2 / nk[c], var_floor)
            new_w[c] = nk[c]
        new_w = np.maximum(new_w, 1e-12)
        new_w /= new_w.sum()
        model = GMM(weights=new_w, means=new_mu, variances=new_var)

        ll = float(model.log_density(x).sum())
        path.append(ll)
        if abs(ll - path[-2]) <= 1e-10 * max(1.0, abs(ll)):
            break

    model.log_likelihood_path = path
    return model
