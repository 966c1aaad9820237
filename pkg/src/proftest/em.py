"""Maximum likelihood estimation by EM with the latent level values as missing data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, NumericOverflowError, SingularDesignError, SingularInformationError
from .information import InfoMatrix, bias_block, observed_information, score
from .model import (
    LOG_2PI,
    LikelihoodKernels,
    Measurements,
    ParameterVector,
    StudyDesign,
    compute_kernels,
)


@dataclass(frozen=True)
class EmSettings:
    """Stopping rule and starting point of :func:`fit_em`.

    Convergence needs the relative log-likelihood change below ``tol_loglik``,
    the largest parameter step below ``tol_param`` and, because EM creeps
    linearly along weakly informed directions, the largest score component
    below ``tol_score * (1 + |loglik|)``.
    """

    tol_loglik: float = 1e-10
    tol_param: float = 1e-8
    max_iter: int = 10_000
    init: Optional[ParameterVector] = None
    tol_score: float = 1e-6

    def __post_init__(self):
        if not self.tol_loglik > 0:
            raise ValueError("tol_loglik must be positive")
        if not self.tol_param > 0:
            raise ValueError("tol_param must be positive")
        if not self.tol_score > 0:
            raise ValueError("tol_score must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit_em`.

    ``info_bias_inv`` holds the ``v`` entries used by the Wald statistics; it
    is ``None`` when the bias block could not be inverted, in which case
    :meth:`bias_inverse` raises.
    """

    theta_hat: ParameterVector
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    info: InfoMatrix
    info_bias: np.ndarray
    info_bias_inv: Optional[np.ndarray]
    score: np.ndarray
    design: StudyDesign
    flags: tuple[str, ...] = field(default=())
    info_error: Optional[str] = None

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1])

    @property
    def score_max(self) -> float:
        return float(np.max(np.abs(self.score)))

    def bias_inverse(self) -> np.ndarray:
        if self.info_bias_inv is None:
            raise SingularInformationError(self.info_error or "bias block of the information is singular")
        return self.info_bias_inv


def default_init(data: Measurements, design: StudyDesign) -> ParameterVector:
    """Reference-lab cell means for the levels, and no bias for every lab."""
    return ParameterVector.null(data.means[0], design.p)


def _e_step(k: LikelihoodKernels, design: StudyDesign) -> tuple[np.ndarray, np.ndarray]:
    xhat = design.sigma2_x * k.M / k.a
    x2hat = design.sigma2_x / k.a + xhat**2
    return xhat, x2hat


def e_step(theta: ParameterVector, data: Measurements, design: StudyDesign) -> tuple[np.ndarray, np.ndarray]:
    """Conditional first and second moments of the latent ``x_j`` given the data."""
    return _e_step(compute_kernels(theta, data, design), design)


def m_step(xhat, x2hat, data: Measurements, design: StudyDesign) -> ParameterVector:
    """Closed-form maximiser of the expected complete-data log-likelihood.

    For each participant the update is the weighted least-squares line of the
    cell sums on ``xhat`` with weights ``1 / sigma2_ij``, with ``x2hat`` in
    place of ``xhat**2``.
    """
    xhat = np.asarray(xhat, dtype=float).reshape(-1)
    x2hat = np.asarray(x2hat, dtype=float).reshape(-1)
    data.check(design)
    if xhat.size != design.m or x2hat.size != design.m:
        raise DimensionError(f"moments must have length m={design.m}")
    alpha, beta = _Workspace(data, design).m_step(xhat, x2hat)
    return ParameterVector(xhat, alpha, beta)


class _Workspace:
    """Constants of one (data, design) pair hoisted out of the EM loop."""

    def __init__(self, data: Measurements, design: StudyDesign):
        self.design = design
        self.m = design.m
        self.n = design.n_array[:, None]
        self.s2 = design.sigma2
        self.inv_s2 = 1.0 / design.sigma2
        self.s2x = design.sigma2_x
        self.sums = data.sums
        self.means = data.means
        self.css_term = (data.centered_ss * self.inv_s2).sum(axis=0)
        self.const = -0.5 * design.m * design.n_total * LOG_2PI - 0.5 * float(
            (self.n * np.log(design.sigma2)).sum()
        )
        w = self.inv_s2[1:]
        n1 = design.n_array[1:]
        self.w = w
        self.n1 = n1
        self.sw = w.sum(axis=1)
        self.sws = (w * data.sums[1:]).sum(axis=1)
        self.wS = w * data.sums[1:]

    def step(self, mu, alpha, beta):
        """Kernels at ``theta``; returns the log-likelihood and E-step moments."""
        af = np.concatenate(([0.0], alpha))[:, None]
        bf = np.concatenate(([1.0], beta))[:, None]
        a = 1.0 + self.s2x * (self.n * bf * bf * self.inv_s2).sum(axis=0)
        D = self.sums - self.n * af
        M = mu / self.s2x + (bf * D * self.inv_s2).sum(axis=0)
        xhat = self.s2x * M / a
        resid = self.means - af - bf * xhat
        Q = self.css_term + (self.n * resid * resid * self.inv_s2).sum(axis=0) + (xhat - mu) ** 2 / self.s2x
        ll = self.const - 0.5 * float(np.log(a).sum()) - 0.5 * float(Q.sum())
        return ll, xhat, self.s2x / a + xhat * xhat

    def m_step(self, xhat, x2hat):
        w, n, sw = self.w, self.n1, self.sw
        swx = w @ xhat
        swx2 = w @ x2hat
        swxs = self.wS @ xhat
        denom = n * (swx2 * sw - swx * swx)
        scale = n * swx2 * sw
        bad = ~(denom > 1e-14 * scale) | ~np.isfinite(denom)
        if bad.any():
            raise SingularDesignError(int(np.argmax(bad)) + 2)
        beta = (swxs * sw - swx * self.sws) / denom
        alpha = (self.sws - n * beta * swx) / (n * sw)
        return alpha, beta


def fit_em(data: Measurements, design: StudyDesign, settings: EmSettings = EmSettings()) -> FitResult:
    """Run EM until every stopping criterion holds or ``max_iter`` is reached.

    Non-convergence is reported through ``converged=False``; a degenerate
    M-step raises :class:`SingularDesignError`.
    """
    data.check(design)
    theta = settings.init if settings.init is not None else default_init(data, design)
    theta.check(design)
    flags = []
    if design.m == 1:
        flags.append("single level: additive and multiplicative bias are confounded")

    ws = _Workspace(data, design)
    mu, alpha, beta = theta.mu_x, theta.alpha, theta.beta
    ll, xhat, x2hat = ws.step(mu, alpha, beta)
    if not math.isfinite(ll):
        raise NumericOverflowError("log-likelihood at the starting point is not finite")
    trace = [ll]
    current = theta.to_array()
    converged = False
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        alpha, beta = ws.m_step(xhat, x2hat)
        mu = xhat
        new_ll, xhat, x2hat = ws.step(mu, alpha, beta)
        if not math.isfinite(new_ll):
            raise NumericOverflowError(f"log-likelihood became non-finite at iteration {iterations}")
        trace.append(new_ll)
        new = np.concatenate((mu, alpha, beta))
        small_ll = abs(new_ll - ll) <= settings.tol_loglik * max(abs(new_ll), 1.0)
        small_step = float(np.max(np.abs(new - current))) <= settings.tol_param
        ll, current = new_ll, new
        if small_ll and small_step:
            u = score(ParameterVector(mu, alpha, beta), data, design)
            if float(np.max(np.abs(u))) <= settings.tol_score * (1.0 + abs(new_ll)):
                converged = True
                break
    theta = ParameterVector(mu, alpha, beta)
    return _finish(theta, np.asarray(trace), iterations, converged, data, design, tuple(flags))


def _finish(theta, trace, iterations, converged, data, design, flags) -> FitResult:
    info = observed_information(theta, data, design)
    try:
        block, inv = bias_block(info)
        err = None
    except SingularInformationError as exc:
        block, inv, err = info.bias.copy(), None, str(exc)
    return FitResult(
        theta_hat=theta,
        loglik_trace=trace,
        iterations=iterations,
        converged=converged,
        info=info,
        info_bias=block,
        info_bias_inv=inv,
        score=score(theta, data, design),
        design=design,
        flags=flags,
        info_error=err,
    )
