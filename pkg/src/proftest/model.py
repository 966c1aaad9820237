"""Data types and likelihood kernels of the multivariate ultrastructural model.

Laboratory ``i`` (1-based, lab 1 is the reference) measures level ``j`` of a
single item ``n_i`` times::

    Y_1jk = x_j + e_1jk
    Y_ijk = alpha_i + beta_i * x_j + e_ijk        (i >= 2)

with ``x_j ~ N(mu_j, sigma2_x[j])`` shared by every laboratory and
``e_ijk ~ N(0, sigma2[i, j])``.  All variances are known.

Arrays indexed by laboratory are 0-based internally (row 0 is the reference).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError, NumericOverflowError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class StudyDesign:
    """Dimensions, replica counts and known variances of a study.

    ``sigma2_x`` has length ``m``; ``sigma2`` is ``p x m`` with row 0 the
    reference laboratory; ``n`` holds the per-laboratory replica counts.
    """

    sigma2_x: np.ndarray
    sigma2: np.ndarray
    n: tuple[int, ...]

    def __post_init__(self):
        sigma2_x = np.array(self.sigma2_x, dtype=float).reshape(-1)
        sigma2 = np.array(self.sigma2, dtype=float)
        n = tuple(int(v) for v in self.n)
        if sigma2.ndim != 2:
            raise DimensionError("sigma2 must be a p x m table")
        p, m = sigma2.shape
        if p < 2:
            raise InputError(f"need at least 2 laboratories, got p={p}")
        if m < 1:
            raise InputError("need at least one level")
        if sigma2_x.shape != (m,):
            raise DimensionError(f"sigma2_x has length {sigma2_x.size}, expected m={m}")
        if len(n) != p:
            raise DimensionError(f"replica counts have length {len(n)}, expected p={p}")
        for i, ni in enumerate(n, start=1):
            if ni < 1:
                raise InputError(f"lab {i}: replica count must be >= 1, got {ni}")
        for j, v in enumerate(sigma2_x, start=1):
            if not (np.isfinite(v) and v > 0):
                raise InputError(f"sigma2_x[{j}] must be positive, got {v}")
        bad = np.argwhere(~(np.isfinite(sigma2) & (sigma2 > 0)))
        if bad.size:
            i, j = bad[0]
            raise InputError(f"sigma2[{i + 1},{j + 1}] must be positive, got {sigma2[i, j]}")
        sigma2_x.setflags(write=False)
        sigma2.setflags(write=False)
        object.__setattr__(self, "sigma2_x", sigma2_x)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "n", n)

    @property
    def p(self) -> int:
        return self.sigma2.shape[0]

    @property
    def m(self) -> int:
        return self.sigma2.shape[1]

    @property
    def n_total(self) -> int:
        return sum(self.n)

    @property
    def n_array(self) -> np.ndarray:
        return np.asarray(self.n, dtype=float)

    @property
    def n_params(self) -> int:
        return self.m + 2 * (self.p - 1)

    def with_replicas(self, n: Sequence[int] | int) -> "StudyDesign":
        if np.isscalar(n):
            n = [int(n)] * self.p
        return StudyDesign(self.sigma2_x, self.sigma2, tuple(n))


@dataclass(frozen=True)
class Measurements:
    """Observed ``Y_ijk`` as one ``(m, n_i)`` array per laboratory.

    Per-cell sums, means and centred sums of squares are cached on
    construction with compensated (``math.fsum``) summation.
    """

    y: tuple[np.ndarray, ...]
    sums: np.ndarray = field(init=False, repr=False)
    means: np.ndarray = field(init=False, repr=False)
    centered_ss: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.y) < 2:
            raise DimensionError("need data for at least 2 laboratories")
        ys = []
        m = None
        for i, block in enumerate(self.y, start=1):
            arr = np.array(block, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            if arr.ndim != 2:
                raise DimensionError(f"lab {i}: expected an (m, n_i) array")
            if m is None:
                m = arr.shape[0]
            elif arr.shape[0] != m:
                raise DimensionError(f"lab {i}: has {arr.shape[0]} levels, expected {m}")
            if arr.shape[1] < 1:
                raise DimensionError(f"lab {i}: no replicates")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"lab {i}: non-finite measurement")
            arr.setflags(write=False)
            ys.append(arr)
        p = len(ys)
        sums = np.empty((p, m))
        means = np.empty((p, m))
        css = np.empty((p, m))
        for i, arr in enumerate(ys):
            ni = arr.shape[1]
            for j in range(m):
                row = arr[j].tolist()
                try:
                    s = math.fsum(row)
                    mean = s / ni
                    ss = math.fsum((v - mean) ** 2 for v in row)
                except OverflowError:
                    raise NumericOverflowError(f"lab {i + 1}, level {j + 1}: values too large to summarise") from None
                sums[i, j] = s
                means[i, j] = mean
                css[i, j] = ss
        for a in (sums, means, css):
            a.setflags(write=False)
        object.__setattr__(self, "y", tuple(ys))
        object.__setattr__(self, "sums", sums)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "centered_ss", css)

    @property
    def p(self) -> int:
        return len(self.y)

    @property
    def m(self) -> int:
        return self.y[0].shape[0]

    @property
    def replicas(self) -> tuple[int, ...]:
        return tuple(arr.shape[1] for arr in self.y)

    def check(self, design: StudyDesign) -> None:
        """Raise :class:`DimensionError` unless the data match ``design``."""
        if self.p != design.p:
            raise DimensionError(f"data have {self.p} labs, design has {design.p}")
        if self.m != design.m:
            raise DimensionError(f"data have {self.m} levels, design has {design.m}")
        for i, (got, want) in enumerate(zip(self.replicas, design.n), start=1):
            if got != want:
                raise DimensionError(f"lab {i}: {got} replicates in data, design says {want}")

    def shifted(self, lab: int, c: float) -> "Measurements":
        """Copy with ``c`` added to every observation of 1-based ``lab``."""
        ys = list(self.y)
        ys[lab - 1] = ys[lab - 1] + c
        return Measurements(tuple(ys))


@dataclass(frozen=True)
class ParameterVector:
    """``theta = (mu_x[0..m), alpha_2..alpha_p, beta_2..beta_p)``.

    The reference constraint ``alpha_1 = 0, beta_1 = 1`` is implicit.
    """

    mu_x: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu_x, dtype=float).reshape(-1)
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if alpha.shape != beta.shape:
            raise DimensionError(f"alpha has {alpha.size} entries, beta has {beta.size}")
        for a in (mu, alpha, beta):
            a.setflags(write=False)
        object.__setattr__(self, "mu_x", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.mu_x.size

    @property
    def p(self) -> int:
        return self.alpha.size + 1

    @property
    def alpha_full(self) -> np.ndarray:
        return np.concatenate(([0.0], self.alpha))

    @property
    def beta_full(self) -> np.ndarray:
        return np.concatenate(([1.0], self.beta))

    @property
    def bias(self) -> np.ndarray:
        """The bias sub-vector ``(alpha_2..alpha_p, beta_2..beta_p)``."""
        return np.concatenate((self.alpha, self.beta))

    def to_array(self) -> np.ndarray:
        return np.concatenate((self.mu_x, self.alpha, self.beta))

    @classmethod
    def from_array(cls, theta, m: int) -> "ParameterVector":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        k = theta.size - m
        if k < 2 or k % 2:
            raise DimensionError(f"theta of length {theta.size} does not fit m={m}")
        h = k // 2
        return cls(theta[:m], theta[m : m + h], theta[m + h :])

    @classmethod
    def null(cls, mu_x, p: int) -> "ParameterVector":
        """No-bias parameters: every ``alpha_i = 0`` and ``beta_i = 1``."""
        return cls(mu_x, np.zeros(p - 1), np.ones(p - 1))

    def check(self, design: StudyDesign) -> None:
        if self.m != design.m:
            raise DimensionError(f"theta has {self.m} level means, design has m={design.m}")
        if self.p != design.p:
            raise DimensionError(f"theta has {self.p - 1} bias pairs, design has p-1={design.p - 1}")


@dataclass(frozen=True)
class LikelihoodKernels:
    """Per-level quantities shared by the likelihood, score and information.

    ``a``, ``M``, ``Q`` have length ``m``; ``D`` is ``p x m`` with row 0 the
    reference laboratory.  ``xhat`` is the conditional mean of ``x_j``.
    """

    a: np.ndarray
    M: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    xhat: np.ndarray


def _check_all(theta: ParameterVector, data: Measurements, design: StudyDesign) -> None:
    theta.check(design)
    data.check(design)


def compute_kernels(theta: ParameterVector, data: Measurements, design: StudyDesign) -> LikelihoodKernels:
    """Evaluate ``a_j``, ``M_j``, ``D_ij`` and ``Q_j`` without forming any covariance.

    ``Q_j`` is the quadratic form under ``Sigma_j = D(sigma2_j) + s2x beta beta^T``.
    Through the rank-one inverse it equals the minimum over ``u`` of the
    weighted residual sum of squares about ``alpha + beta u`` plus the prior
    term ``(u - mu_j)^2 / s2x``, attained at ``u = s2x M_j / a_j``.  That form
    is a sum of non-negative terms, so it stays non-negative in floating point.
    """
    _check_all(theta, data, design)
    alpha = theta.alpha_full[:, None]
    beta = theta.beta_full[:, None]
    n = design.n_array[:, None]
    s2 = design.sigma2
    s2x = design.sigma2_x
    mu = theta.mu_x

    # overflow surfaces as a non-finite log-likelihood and is reported there
    with np.errstate(over="ignore", invalid="ignore"):
        a = 1.0 + s2x * np.sum(n * beta**2 / s2, axis=0)
        D = data.sums - n * alpha
        M = mu / s2x + np.sum(beta * D / s2, axis=0)
        xhat = s2x * M / a
        resid = data.means - alpha - beta * xhat
        Q = np.sum((data.centered_ss + n * resid**2) / s2, axis=0) + (xhat - mu) ** 2 / s2x
    return LikelihoodKernels(a=a, M=M, D=D, Q=Q, xhat=xhat)


def log_likelihood(theta: ParameterVector, data: Measurements, design: StudyDesign) -> float:
    k = compute_kernels(theta, data, design)
    return _loglik_from_kernels(k, design)


def _loglik_from_kernels(k: LikelihoodKernels, design: StudyDesign) -> float:
    with np.errstate(all="ignore"):
        value = (
            -0.5 * design.m * design.n_total * LOG_2PI
            - 0.5 * float(np.sum(np.log(k.a)))
            - 0.5 * float(np.sum(design.n_array[:, None] * np.log(design.sigma2)))
            - 0.5 * float(np.sum(k.Q))
        )
    if not math.isfinite(value):
        raise NumericOverflowError("log-likelihood evaluated to a non-finite value")
    return value
