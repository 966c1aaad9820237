"""Score vector, observed information and its asymptotic limit.

Parameter ordering everywhere is ``(mu_1..mu_m, alpha_2..alpha_p, beta_2..beta_p)``.
The observed information is returned unnormalised (callers divide by ``n``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformationError
from .model import Measurements, ParameterVector, StudyDesign, compute_kernels

#: condition number above which the bias block is treated as singular
MAX_CONDITION = 1e12


def score(theta: ParameterVector, data: Measurements, design: StudyDesign) -> np.ndarray:
    k = compute_kernels(theta, data, design)
    s2x = design.sigma2_x
    s2 = design.sigma2[1:]
    n = design.n_array[1:, None]
    beta = theta.beta[:, None]
    D = k.D[1:]
    # n_i beta_i s2x M_j / a_j - D_ij, shared by the alpha and beta components
    r = n * beta * s2x * k.M / k.a - D
    u_mu = k.M / k.a - theta.mu_x / s2x
    u_alpha = -np.sum(r / s2, axis=1)
    u_beta = -np.sum(s2x / (k.a * s2) * (n * beta + k.M * r), axis=1)
    return np.concatenate((u_mu, u_alpha, u_beta))


@dataclass(frozen=True)
class InfoMatrix:
    """Observed information ``J^n(theta)`` in canonical parameter order."""

    full: np.ndarray
    m: int
    p: int

    @property
    def bias(self) -> np.ndarray:
        """Block without the rows/columns of the level means."""
        return self.full[self.m :, self.m :]


def observed_information(theta: ParameterVector, data: Measurements, design: StudyDesign) -> InfoMatrix:
    """Closed-form negative Hessian of the log-likelihood.

    The upper triangle is assembled and mirrored, so the result is exactly
    symmetric.
    """
    k = compute_kernels(theta, data, design)
    m, p = design.m, design.p
    h = p - 1
    s2x = design.sigma2_x  # (m,)
    s2 = design.sigma2[1:]  # (h, m)
    n = design.n_array[1:, None]  # (h, 1)
    beta = theta.beta[:, None]
    a, M = k.a, k.M
    D = k.D[1:]
    g = s2x / a  # s2x / a_j
    # T_ij = 2 n_i beta_i s2x M_j / a_j - D_ij
    T = 2.0 * n * beta * g * M - D

    J = np.zeros((m + 2 * h, m + 2 * h))
    mu = slice(0, m)
    al = slice(m, m + h)
    be = slice(m + h, m + 2 * h)

    J[mu, mu] = np.diag((a - 1.0) / (s2x * a))
    J[mu, al] = (n * beta / (s2 * a)).T
    J[mu, be] = (T / (s2 * a)).T

    # alpha-alpha
    nb = n * beta / s2  # n_i beta_i / s2_ij
    J_aa = -np.einsum("ij,lj,j->il", nb, nb, g)
    J_aa[np.diag_indices(h)] = np.sum(n / s2 * (1.0 - n * beta**2 * g / s2), axis=1)
    J[al, al] = J_aa

    # alpha-beta; row alpha_i, column beta_l
    J_ab = -np.einsum("ij,lj->il", nb * g, T / s2)
    diag_ab = np.sum(n * g / s2 * (M - beta / s2 * T), axis=1)
    J_ab[np.diag_indices(h)] = diag_ab
    J[al, be] = J_ab

    # beta-beta
    DD = np.einsum("ij,lj,j->il", D / s2, D / s2, g)
    cross = np.einsum("ij,lj,j->il", nb, nb, g * 2.0 * g * (1.0 + 2.0 * g * M**2))
    mixed = np.einsum("ij,lj,j->il", nb, D / s2, 2.0 * g * g * M)
    J_bb = -(DD + cross - mixed - mixed.T)
    inner = (
        n
        - D**2 / s2
        + n * g * (M**2 * (1.0 - 4.0 * n * g * beta**2 / s2) + 4.0 * beta * M * D / s2 - 2.0 * n * beta**2 / s2)
    )
    J_bb[np.diag_indices(h)] = np.sum(g / s2 * inner, axis=1)
    J[be, be] = J_bb

    iu = np.triu_indices_from(J, 1)
    J[(iu[1], iu[0])] = J[iu]
    return InfoMatrix(full=J, m=m, p=p)


def bias_block(info: InfoMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Return the bias block of ``info`` and its inverse.

    Raises :class:`SingularInformationError` when the block's condition number
    exceeds ``MAX_CONDITION`` or the inverse fails a residual check.
    """
    block = info.bias.copy()
    if not np.all(np.isfinite(block)):
        raise SingularInformationError("information matrix has non-finite entries")
    cond = np.linalg.cond(block)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularInformationError(f"bias block of the information is singular (condition {cond:.3g})")
    inv = np.linalg.inv(block)
    inv = 0.5 * (inv + inv.T)
    resid = np.max(np.abs(inv @ block - np.eye(block.shape[0])))
    if resid > 1e-6:
        raise SingularInformationError(f"inverse residual {resid:.3g} too large")
    return block, inv


@dataclass(frozen=True)
class LimitMatrix:
    """Limit of ``J^n / n`` for fixed latent values ``x``.

    Rows and columns of the level means are zero; ``bias`` is the
    ``2(p-1)`` square block.
    """

    full: np.ndarray
    weights: np.ndarray
    x: np.ndarray
    m: int
    p: int

    @property
    def bias(self) -> np.ndarray:
        return self.full[self.m :, self.m :]


def limit_matrix(theta_bias, x, w, design: StudyDesign, weighted: bool = True) -> LimitMatrix:
    """Limit matrix ``W`` of the normalised observed information.

    ``theta_bias`` is ``(alpha_2..alpha_p, beta_2..beta_p)`` (only the betas
    enter), ``x`` the latent level values and ``w`` the limiting fractions
    ``n_i / n`` for all ``p`` laboratories.

    With ``weighted=True`` every sum carries the fractions, i.e. the entries
    are the actual limits of ``J^n / n``.  ``weighted=False`` evaluates the
    commonly printed form in which the fractions are dropped (equivalent to
    setting every ``w_i = 1``).
    """
    theta_bias = np.asarray(theta_bias, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    p, m = design.p, design.m
    h = p - 1
    if theta_bias.size != 2 * h or x.size != m or w.size != p:
        raise ValueError("theta_bias, x and w do not match the design")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("limit weights must be positive and sum to one")
    if not weighted:
        w = np.ones(p)
    beta_full = np.concatenate(([1.0], theta_bias[h:]))
    s2 = design.sigma2
    S = np.sum(w[:, None] * beta_full[:, None] ** 2 / s2, axis=0)  # (m,)

    wb = (w[1:, None] * beta_full[1:, None]) / s2[1:]  # w_i beta_i / s2_ij
    ws = w[1:, None] / s2[1:]
    blocks = []
    for power in (0, 1, 2):
        xp = x**power
        off = -np.einsum("ij,lj,j->il", wb, wb, xp / S)
        off[np.diag_indices(h)] = np.sum(ws * xp, axis=1) - np.sum(wb**2 * xp / S, axis=1)
        blocks.append(off)
    W = np.zeros((m + 2 * h, m + 2 * h))
    W[m : m + h, m : m + h] = blocks[0]
    W[m : m + h, m + h :] = blocks[1]
    W[m + h :, m : m + h] = blocks[1].T
    W[m + h :, m + h :] = blocks[2]
    return LimitMatrix(full=W, weights=w, x=x, m=m, p=p)
