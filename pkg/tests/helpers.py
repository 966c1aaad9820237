"""Builders for hand-made fits and tiny fixtures."""

import numpy as np

from proftest.em import FitResult
from proftest.information import InfoMatrix
from proftest.model import Measurements, ParameterVector, StudyDesign


def toy_design(p=2, m=1, n=1, s2=1.0, s2x=1.0) -> StudyDesign:
    return StudyDesign(np.full(m, s2x), np.full((p, m), s2), (n,) * p)


def toy_data(values) -> Measurements:
    """One level, one replicate per lab."""
    return Measurements(tuple(np.array([[v]]) for v in values))


def fake_fit(alpha, beta, info_bias, m=1, converged=True) -> FitResult:
    """FitResult with a prescribed estimate and bias-block information."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    p = alpha.size + 1
    J = np.asarray(info_bias, dtype=float)
    full = np.zeros((m + J.shape[0],) * 2)
    full[m:, m:] = J
    full[:m, :m] = np.eye(m)
    design = StudyDesign(np.ones(m), np.ones((p, m)), (1,) * p)
    return FitResult(
        theta_hat=ParameterVector(np.zeros(m), alpha, beta),
        loglik_trace=np.array([0.0]),
        iterations=1,
        converged=converged,
        info=InfoMatrix(full, m, p),
        info_bias=J,
        info_bias_inv=np.linalg.inv(J),
        score=np.zeros(m + J.shape[0]),
        design=design,
    )
