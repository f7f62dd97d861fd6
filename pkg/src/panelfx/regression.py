"""Small OLS helper with heteroskedasticity-robust (HC1) inference.

The designs in this package are tiny (a handful of dummies over a few
hundred rows), so a direct numpy solve is both faster and easier to audit
than pulling in a full regression framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["OLSFit", "ols", "welch_ttest"]


@dataclass(frozen=True)
class OLSFit:
    params: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray
    df_resid: int
    cov: np.ndarray


def ols(y: np.ndarray, X: np.ndarray, robust: str = "HC1") -> OLSFit:
    """Fit y = X b by least squares.

    robust="HC1" gives the degrees-of-freedom-corrected sandwich covariance;
    robust="const" gives the classical homoskedastic one. p-values use the
    t distribution with n - k degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValueError("non-finite values in regression inputs")
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more observations ({n}) than regressors ({k})")
    if np.linalg.matrix_rank(X) < k:
        raise ValueError("design matrix is rank deficient")

    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    XtX_inv = np.linalg.inv(X.T @ X)
    df = n - k
    if robust == "HC1":
        meat = (X * resid[:, None] ** 2).T @ X
        cov = XtX_inv @ meat @ XtX_inv * (n / df)
    elif robust == "const":
        cov = XtX_inv * (resid @ resid / df)
    else:
        raise ValueError(f"unknown covariance estimator {robust!r}")

    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, 0.0)
    p = 2 * stats.t.sf(np.abs(t), df)
    return OLSFit(beta, se, t, p, resid, df, cov)


def welch_ttest(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Welch's unequal-variance two-sample t-test; returns (t, p).

    Identical samples give t = 0, p = 1.0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = len(a), len(b)
    denom = np.sqrt(va / na + vb / nb)
    if denom == 0:
        return 0.0, 1.0
    t = (a.mean() - b.mean()) / denom
    df = (va / na + vb / nb) ** 2 / (
        (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    )
    p = 2 * stats.t.sf(abs(t), df)
    return float(t), float(p)
