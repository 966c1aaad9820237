"""Wald tests of laboratory equivalence, familywise adjustment and joint confidence regions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .em import FitResult
from .errors import DomainError, InputError, RankError, SingularInformationError
from .special import chi2_quantile, chi2_sf

ADJUST_METHODS = ("bonferroni", "holm", "hochberg", "hommel")
#: column order of adjusted p-values in reports
REPORT_METHODS = ("holm", "hochberg", "hommel")


class WaldResult(NamedTuple):
    statistic: float
    df: int
    p_value: float


def null_bias(p: int) -> np.ndarray:
    """Bias vector of perfect agreement: every alpha 0, every beta 1."""
    return np.concatenate((np.zeros(p - 1), np.ones(p - 1)))


def _check_lab(fit: FitResult, lab: int) -> int:
    p = fit.design.p
    if not (2 <= lab <= p):
        raise InputError(f"lab must be in 2..{p}, got {lab}")
    return lab - 2


def wald_global(fit: FitResult) -> WaldResult:
    """Joint test that every participant has ``alpha_i = 0`` and ``beta_i = 1``."""
    fit.bias_inverse()  # singular information is an error here as well
    d = fit.theta_hat.bias - null_bias(fit.design.p)
    q = float(d @ fit.info_bias @ d)
    df = d.size
    return WaldResult(q, df, chi2_sf(max(q, 0.0), df))


def full_contrast(fit: FitResult) -> tuple[np.ndarray, np.ndarray]:
    """``(h, H)`` of the global hypothesis in composite form."""
    d = fit.theta_hat.bias - null_bias(fit.design.p)
    return d, np.eye(d.size)


def lab_contrast(fit: FitResult, lab: int) -> tuple[np.ndarray, np.ndarray]:
    """``(h, H)`` selecting ``(alpha_i, beta_i - 1)`` of one laboratory."""
    k = _check_lab(fit, lab)
    h = fit.design.p - 1
    H = np.zeros((2 * h, 2))
    H[k, 0] = 1.0
    H[h + k, 1] = 1.0
    th = fit.theta_hat
    return np.array([th.alpha[k], th.beta[k] - 1.0]), H


def _rank(H: np.ndarray) -> int:
    _, R, _ = scipy.linalg.qr(H, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return 0
    tol = max(H.shape) * np.finfo(float).eps * diag[0]
    return int(np.sum(diag > tol))


def wald_composite(fit: FitResult, h_value, H_matrix) -> WaldResult:
    """Wald statistic for ``h(theta_bias) = 0`` given ``h`` and its Jacobian at the estimate.

    ``H_matrix`` is ``2(p-1) x r`` with full column rank ``r``.
    """
    h_value = np.asarray(h_value, dtype=float).reshape(-1)
    H = np.asarray(H_matrix, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    k = 2 * (fit.design.p - 1)
    if H.shape[0] != k:
        raise InputError(f"H must have {k} rows, got {H.shape[0]}")
    r = H.shape[1]
    if h_value.size != r:
        raise InputError(f"h has length {h_value.size}, H has {r} columns")
    if _rank(H) != r:
        raise RankError(f"H has rank {_rank(H)} < {r}")
    V = fit.bias_inverse()
    inner = H.T @ V @ H
    cond = np.linalg.cond(inner)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularInformationError(f"H^T V H is singular (condition {cond:.3g})")
    q = float(h_value @ np.linalg.solve(inner, h_value))
    return WaldResult(q, r, chi2_sf(max(q, 0.0), r))


def wald_individual(fit: FitResult, lab: int) -> WaldResult:
    """Test of ``alpha_i = 0, beta_i = 1`` for one laboratory ``i >= 2``."""
    k = _check_lab(fit, lab)
    h = fit.design.p - 1
    V = fit.bias_inverse()
    v_aa, v_ab, v_bb = V[k, k], V[k, h + k], V[h + k, h + k]
    a = fit.theta_hat.alpha[k]
    b1 = fit.theta_hat.beta[k] - 1.0
    det = v_aa * v_bb - v_ab**2
    if not det > 0:
        raise SingularInformationError(f"lab {lab}: covariance block has non-positive determinant")
    q = float((b1**2 * v_aa - 2.0 * a * b1 * v_ab + a**2 * v_bb) / det)
    return WaldResult(q, 2, chi2_sf(max(q, 0.0), 2))


def adjust_pvalues(raw: Sequence[float], method: str = "hochberg") -> np.ndarray:
    """Familywise-error adjusted p-values.

    ``holm`` is step-down, ``hochberg`` step-up, ``hommel`` the closed Simes
    procedure and ``bonferroni`` ``min(k p, 1)``.
    """
    p = np.asarray(raw, dtype=float).reshape(-1)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("p-values must lie in [0, 1]")
    method = method.lower()
    k = p.size
    if k == 0:
        return p.copy()
    if method == "bonferroni":
        return np.minimum(k * p, 1.0)
    order = np.argsort(p, kind="stable")
    ps = p[order]
    ranks = np.arange(1, k + 1)
    if method == "holm":
        adj = np.minimum(1.0, np.maximum.accumulate((k - ranks + 1) * ps))
    elif method == "hochberg":
        adj = np.minimum(1.0, np.minimum.accumulate(((k - ranks + 1) * ps)[::-1])[::-1])
    elif method == "hommel":
        adj = _hommel_sorted(ps)
    else:
        raise DomainError(f"unknown adjustment method {method!r}; expected one of {ADJUST_METHODS}")
    out = np.empty(k)
    out[order] = adj
    return out


def _hommel_sorted(ps: np.ndarray) -> np.ndarray:
    # follows the usual closed-testing shortcut over subset sizes m = k..2
    k = ps.size
    if k == 1:
        return ps.copy()
    i = np.arange(1, k + 1)
    q = np.full(k, np.min(k * ps / i))
    pa = q.copy()
    for m in range(k - 1, 1, -1):
        n_low = k - m + 1  # indices 0..n_low-1
        q1 = np.min(m * ps[n_low:] / np.arange(2, m + 1))
        q[:n_low] = np.minimum(m * ps[:n_low], q1)
        q[n_low:] = q[n_low - 1]
        pa = np.maximum(pa, q)
    return np.minimum(1.0, np.maximum(pa, ps))


@dataclass(frozen=True)
class LabTest:
    lab: int
    statistic: float
    df: int
    p_raw: float
    p_adjusted: dict
    reject: bool
    label: Optional[str] = None


@dataclass(frozen=True)
class WaldReport:
    q_global: float
    df_global: int
    p_global: float
    labs: tuple[LabTest, ...]
    method: str
    alpha: float

    @property
    def verdicts(self) -> dict:
        return {t.lab: ("reject" if t.reject else "retain") for t in self.labs}


def wald_report(
    fit: FitResult,
    method: str = "hochberg",
    alpha: float = 0.01,
    labels: Optional[Sequence[str]] = None,
) -> WaldReport:
    """Global test plus every per-laboratory test with all adjustments.

    Verdicts use the adjusted p-values of ``method`` at familywise level ``alpha``.
    """
    if method not in ADJUST_METHODS:
        raise DomainError(f"unknown adjustment method {method!r}")
    if not 0 < alpha < 1:
        raise DomainError(f"familywise level must lie in (0, 1), got {alpha}")
    g = wald_global(fit)
    p = fit.design.p
    tests = [wald_individual(fit, i) for i in range(2, p + 1)]
    raw = np.array([t.p_value for t in tests])
    adjusted = {mth: adjust_pvalues(raw, mth) for mth in ADJUST_METHODS}
    labs = []
    for k, t in enumerate(tests):
        adj = {mth: float(adjusted[mth][k]) for mth in ADJUST_METHODS}
        labs.append(
            LabTest(
                lab=k + 2,
                statistic=t.statistic,
                df=t.df,
                p_raw=t.p_value,
                p_adjusted=adj,
                reject=adj[method] <= alpha,
                label=None if labels is None else labels[k + 1],
            )
        )
    return WaldReport(g.statistic, g.df, g.p_value, tuple(labs), method, alpha)


@dataclass(frozen=True)
class EllipseSpec:
    """Joint confidence region of ``(alpha_i, beta_i)`` for one laboratory."""

    lab: int
    center: np.ndarray
    shape: np.ndarray
    level: float
    radius2: float
    boundary: np.ndarray = field(repr=False)

    def mahalanobis2(self, points) -> np.ndarray:
        z = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        return np.einsum("ki,ij,kj->k", z, np.linalg.inv(self.shape), z)

    def contains(self, point) -> bool:
        return bool(self.mahalanobis2(point)[0] <= self.radius2)


def confidence_ellipse(
    fit: FitResult,
    lab: int,
    familywise_level: float = 0.99,
    comparisons: Optional[int] = None,
    n_points: int = 256,
) -> EllipseSpec:
    """Bonferroni-corrected joint confidence ellipse for one laboratory.

    ``familywise_level`` is the joint confidence coefficient over
    ``comparisons`` regions (default: all ``p - 1`` participants).
    """
    k = _check_lab(fit, lab)
    if not 0 < familywise_level < 1:
        raise DomainError(f"familywise level must lie in (0, 1), got {familywise_level}")
    if comparisons is None:
        comparisons = fit.design.p - 1
    if comparisons < 1:
        raise DomainError("comparisons must be at least 1")
    if n_points < 128:
        raise DomainError("boundary needs at least 128 points")
    h = fit.design.p - 1
    V = fit.bias_inverse()
    idx = [k, h + k]
    shape = V[np.ix_(idx, idx)]
    evals, evecs = np.linalg.eigh(shape)
    if not np.all(evals > 0):
        raise SingularInformationError(f"lab {lab}: covariance block is not positive definite")
    level = 1.0 - (1.0 - familywise_level) / comparisons
    r2 = chi2_quantile(level, 2)
    center = np.array([fit.theta_hat.alpha[k], fit.theta_hat.beta[k]])
    t = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    circle = np.stack((np.cos(t), np.sin(t)))
    pts = (evecs * np.sqrt(evals * r2)) @ circle
    boundary = center + pts.T
    boundary = np.vstack((boundary, boundary[:1]))
    return EllipseSpec(lab=lab, center=center, shape=shape, level=level, radius2=r2, boundary=boundary)
