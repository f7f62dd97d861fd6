"""Synthetic-control construction.

For each treated unit: pick a small donor pool of control units (same
industry, highest pre-period correlation), fit weights that minimize the
pre-period mean squared error in log scale, and synthesize the full
counterfactual path as the weighted donor combination.

The default weight mode constrains weights to the probability simplex
(w >= 0, sum w = 1); unconstrained least squares is available as an
alternative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panel import MetricKind, Treatment, WebsiteInstance, log1p_transform

__all__ = ["DonorPool", "SynthWeights", "select_donors", "fit_weights", "synthesize"]


@dataclass(frozen=True)
class DonorPool:
    treated_instance_id: str
    donor_ids: tuple[str, ...]
    correlations: tuple[float, ...]
    industry_matched: bool  # False when the industry pool was too thin

    def __post_init__(self):
        if self.treated_instance_id in self.donor_ids:
            raise ValueError("treated instance cannot be its own donor")


@dataclass(frozen=True)
class SynthWeights:
    donor_ids: tuple[str, ...]
    weights: np.ndarray
    mode: str
    pre_mse: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def to_dict(self, treated_id: str | None = None) -> dict:
        out = {
            "donors": list(self.donor_ids),
            "weights": [float(w) for w in self.weights],
            "pre_mse": float(self.pre_mse),
            "mode": self.mode,
        }
        if treated_id is not None:
            out["treated_id"] = treated_id
        return out


def _pearson(x: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Correlation of vector x against each row of Y; NaN for constant rows."""
    xc = x - x.mean()
    sx = np.sqrt(xc @ xc)
    Yc = Y - Y.mean(axis=1, keepdims=True)
    sy = np.sqrt(np.einsum("ij,ij->i", Yc, Yc))
    with np.errstate(divide="ignore", invalid="ignore"):
        return (Yc @ xc) / (sy * sx)


def select_donors(
    treated: WebsiteInstance,
    pool: list[WebsiteInstance],
    metric: MetricKind,
    pre_indices: np.ndarray,
    k: int = 5,
    same_industry: bool = True,
) -> DonorPool:
    """Pick up to k donors by pre-period log-scale Pearson correlation.

    Candidates come from the treated unit's industry; if that leaves fewer
    than 2 candidates the selection falls back to the whole control pool
    (recorded via ``industry_matched``). Ties break on ascending instance id.
    """
    candidates = [
        c
        for c in pool
        if c.treatment is Treatment.CONTROL
        and c.instance_id != treated.instance_id
        and c.get(metric) is not None
    ]
    if not candidates:
        raise ValueError("empty donor pool")

    industry_matched = False
    if same_industry:
        same = [c for c in candidates if c.industry == treated.industry]
        if len(same) >= 2:
            candidates = same
            industry_matched = True

    ts = treated.get(metric)
    if ts is None:
        raise ValueError(f"treated instance lacks a {metric.value} series")
    x = np.log1p(ts.values[pre_indices])
    if np.ptp(x) == 0:
        raise ValueError("constant treated pre-period series; correlation undefined")

    Y = np.stack([np.log1p(c.get(metric).values[pre_indices]) for c in candidates])
    corr = _pearson(x, Y)
    corr = np.where(np.isnan(corr), -np.inf, corr)

    order = sorted(range(len(candidates)), key=lambda i: (-corr[i], candidates[i].instance_id))
    chosen = order[:k]
    return DonorPool(
        treated_instance_id=treated.instance_id,
        donor_ids=tuple(candidates[i].instance_id for i in chosen),
        correlations=tuple(float(corr[i]) for i in chosen),
        industry_matched=industry_matched,
    )


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (Duchi et al. 2008)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def fit_weights(
    treated_pre: np.ndarray,
    donors_pre: np.ndarray,
    mode: str = "simplex",
    tol: float = 1e-10,
    max_iter: int = 20_000,
) -> SynthWeights:
    """Fit donor weights minimizing the pre-period MSE in log scale.

    simplex mode solves min ||y - D w||^2 s.t. w >= 0, sum w = 1 by
    accelerated projected gradient on the (tiny) donor Gram matrix;
    unconstrained mode is plain least squares without intercept. Both are
    deterministic for fixed inputs.
    """
    y = np.asarray(treated_pre, dtype=float)
    D = np.asarray(donors_pre, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    T, k = D.shape
    if len(y) != T:
        raise ValueError("treated and donor pre-period lengths differ")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(D))):
        raise ValueError("non-finite values in fit inputs")

    if mode == "unconstrained":
        if T < k + 1:
            raise ValueError("pre-period too short for unconstrained fit")
        if np.linalg.matrix_rank(D) < k:
            raise ValueError(
                "rank-deficient donor matrix in unconstrained mode; try simplex mode"
            )
        w, _, _, _ = np.linalg.lstsq(D, y, rcond=None)
    elif mode == "simplex":
        if T < 2:
            raise ValueError("pre-period too short for simplex fit")
        w = _fit_simplex(y, D, tol, max_iter)
    else:
        raise ValueError(f"unknown weight mode {mode!r}")

    resid = y - D @ w
    return SynthWeights(
        donor_ids=tuple(str(i) for i in range(k)),
        weights=w,
        mode=mode,
        pre_mse=float(resid @ resid / T),
    )


def _fit_simplex(y: np.ndarray, D: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Accelerated projected gradient plus an exact KKT polish on the
    active support; deterministic and accurate to machine precision for
    the tiny donor counts used here."""
    k = D.shape[1]
    if k == 1:
        return np.ones(1)
    # work in Gram form: f(w) = w'Gw/2 - b'w (+ const)
    G = D.T @ D
    b = D.T @ y
    L = float(np.linalg.eigvalsh(G)[-1])
    if L == 0:  # all-zero donors; any simplex point is optimal
        return np.full(k, 1.0 / k)
    step = 1.0 / L

    def obj(w):
        return 0.5 * w @ G @ w - b @ w

    w = np.full(k, 1.0 / k)
    z = w.copy()
    t = 1.0
    f_prev = obj(w)
    for _ in range(max_iter):
        w_new = _project_simplex(z - step * (G @ z - b))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        f_new = obj(w_new)
        if f_new > f_prev:  # restart momentum on non-monotone step
            z = w_new.copy()
            t_new = 1.0
        if abs(f_prev - f_new) < tol * max(1.0, abs(f_prev)):
            w = w_new
            break
        w, t, f_prev = w_new, t_new, f_new

    polished = _polish_support(G, b, w)
    if polished is not None and obj(polished) <= obj(w):
        return polished
    return w


def _polish_support(G: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    """Solve the equality-constrained problem exactly on the support of w.

    KKT system: [G_S 1; 1' 0] [w_S; lam] = [b_S; 1]. Returns None when the
    solve fails or leaves the simplex.
    """
    support = np.flatnonzero(w > 1e-9)
    if support.size == 0:
        return None
    m = support.size
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = G[np.ix_(support, support)]
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    rhs = np.concatenate([b[support], [1.0]])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    ws = sol[:m]
    if np.any(ws < -1e-12):
        return None
    full = np.zeros_like(w)
    full[support] = np.maximum(ws, 0.0)
    full /= full.sum()
    return full


def synthesize(weights: SynthWeights, donors_full: np.ndarray) -> np.ndarray:
    """Pointwise weighted sum of full-window donor log-series.

    donors_full has one column per donor, aligned to ``weights.donor_ids``.
    """
    D = np.asarray(donors_full, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    if D.shape[1] != len(weights.weights):
        raise ValueError(
            f"donor matrix has {D.shape[1]} columns for {len(weights.weights)} weights"
        )
    return D @ weights.weights


def fit_instance_weights(
    treated: WebsiteInstance,
    donors: list[WebsiteInstance],
    metric: MetricKind,
    pre_indices: np.ndarray,
    mode: str = "simplex",
) -> SynthWeights:
    """fit_weights on instances, preserving donor instance ids."""
    y = np.log1p(treated.get(metric).values[pre_indices])
    D = np.stack([np.log1p(d.get(metric).values[pre_indices]) for d in donors], axis=1)
    fitted = fit_weights(y, D, mode=mode)
    return SynthWeights(
        donor_ids=tuple(d.instance_id for d in donors),
        weights=fitted.weights,
        mode=fitted.mode,
        pre_mse=fitted.pre_mse,
    )
