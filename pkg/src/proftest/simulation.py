"""Data generation and Monte Carlo size / power studies.

Randomness is fully determined by a 64-bit master seed.  Replication ``r``
draws from its own Philox stream keyed by ``splitmix64(master ^ mix(r))``, so
results do not depend on how replications are scheduled across workers.
Normal variates come from the inverse normal CDF applied to open-interval
uniforms built from the raw 64-bit output.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from .em import fit_em
from .errors import ProftestError
from .inference import wald_global, wald_individual
from .model import Measurements, ParameterVector, StudyDesign
from .special import chi2_quantile

MASK64 = (1 << 64) - 1

# level means and standard deviations of the latent values, and the three
# measurement-error regimes (standard deviations, identical for every lab)
REFERENCE_MU_X = (10.0, 20.0, 30.0, 40.0, 50.0)
REFERENCE_SD_X = (0.24, 0.31, 0.38, 0.45, 0.52)
REGIME_SD = {
    "a": (0.1, 0.2, 0.3, 0.4, 0.5),
    "b": (0.2, 0.4, 0.6, 0.8, 1.0),
    "c": (0.3, 0.6, 0.9, 1.2, 1.5),
}
DEFAULT_LABS = 5


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(master_seed: int, index: int) -> int:
    """Seed of replication ``index`` under ``master_seed``."""
    return splitmix64((master_seed & MASK64) ^ splitmix64(index & MASK64))


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def standard_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    raw = rng.bit_generator.random_raw(size)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class TrueParameters:
    theta: ParameterVector
    design: StudyDesign

    def __post_init__(self):
        self.theta.check(self.design)


def reference_truth(regime: str = "a", replicas: int = 30, p: int = DEFAULT_LABS) -> TrueParameters:
    """The simulation truth: no bias, five levels, one of the error regimes."""
    if regime not in REGIME_SD:
        raise ValueError(f"unknown regime {regime!r}; expected one of {sorted(REGIME_SD)}")
    sd = np.asarray(REGIME_SD[regime])
    design = StudyDesign(
        sigma2_x=np.asarray(REFERENCE_SD_X) ** 2,
        sigma2=np.tile(sd**2, (p, 1)),
        n=(replicas,) * p,
    )
    return TrueParameters(ParameterVector.null(REFERENCE_MU_X, p), design)


def perturbed(truth: TrueParameters, labs: Sequence[int], d_alpha: float, d_beta: float) -> TrueParameters:
    """Shift ``alpha`` and ``beta`` of the given 1-based labs."""
    alpha = truth.theta.alpha.copy()
    beta = truth.theta.beta.copy()
    for lab in labs:
        alpha[lab - 2] += d_alpha
        beta[lab - 2] += d_beta
    return TrueParameters(ParameterVector(truth.theta.mu_x, alpha, beta), truth.design)


def simulate_dataset(truth: TrueParameters, seed: int, x: Optional[Sequence[float]] = None) -> Measurements:
    """Draw one data set.

    The latent ``x_j`` are drawn once and shared by every lab and replicate;
    pass ``x`` to condition on fixed latent values instead.
    """
    design = truth.design
    th = truth.theta
    rng = _generator(seed)
    m = design.m
    z = standard_normals(rng, m + m * design.n_total)
    if x is None:
        xs = th.mu_x + np.sqrt(design.sigma2_x) * z[:m]
    else:
        xs = np.asarray(x, dtype=float).reshape(m)
    ys = []
    pos = m
    alpha = th.alpha_full
    beta = th.beta_full
    for i, ni in enumerate(design.n):
        e = z[pos : pos + m * ni].reshape(m, ni) * np.sqrt(design.sigma2[i])[:, None]
        pos += m * ni
        ys.append(alpha[i] + beta[i] * xs[:, None] + e)
    return Measurements(tuple(ys))


Hypothesis = Union[str, int]


@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo design.

    For power studies each deviation ``d`` shifts ``alpha += alpha_scale * d``
    and ``beta += beta_scale * d`` for every lab in ``perturbed_labs``.
    """

    replications: int = 2000
    levels: tuple[float, ...] = (0.01, 0.05, 0.10)
    replica_counts: tuple[int, ...] = (3, 7, 15, 30)
    regimes: tuple[str, ...] = ("a",)
    deviations: tuple[float, ...] = (0.0, 0.0025, 0.005, 0.01, 0.02)
    perturbed_labs: tuple[int, ...] = (2, 4)
    alpha_scale: float = 1.0
    beta_scale: float = 1.0
    power_level: float = 0.05
    labs: int = DEFAULT_LABS
    seed: int = 20240101
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        for lv in tuple(self.levels) + (self.power_level,):
            if not 0 < lv < 1:
                raise ValueError(f"levels must lie in (0, 1), got {lv}")
        for r in self.regimes:
            if r not in REGIME_SD:
                raise ValueError(f"unknown regime {r!r}")
        if any(n < 1 for n in self.replica_counts):
            raise ValueError("replica counts must be positive")
        for lab in self.perturbed_labs:
            if not 2 <= lab <= self.labs:
                raise ValueError(f"perturbed lab {lab} outside 2..{self.labs}")
        # tuples survive JSON round trips as lists
        for name in ("levels", "replica_counts", "regimes", "deviations", "perturbed_labs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        return cls(**d)


@dataclass
class StudyResult:
    """Per-cell rejection rates with binomial standard errors."""

    kind: str
    hypothesis: Hypothesis
    config: StudyConfig
    rows: list = field(default_factory=list)
    statistics: dict = field(default_factory=dict, repr=False)

    CSV_COLUMNS = (
        "replica_count",
        "level",
        "regime",
        "rate",
        "se",
        "n_effective",
        "n_failed",
        "deviation",
        "hypothesis",
    )

    def rate(self, regime: str, replica_count: int, level: float, deviation: Optional[float] = None) -> dict:
        for row in self.rows:
            if (
                row["regime"] == regime
                and row["replica_count"] == replica_count
                and math.isclose(row["level"], level)
                and (deviation is None or math.isclose(row["deviation"], deviation, abs_tol=1e-15))
            ):
                return row
        raise KeyError((regime, replica_count, level, deviation))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items() if k in self.CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "kind": self.kind,
                "hypothesis": self.hypothesis,
                "config": asdict(self.config),
                "seed_derivation": "replication r uses Philox key splitmix64(seed ^ splitmix64(r)); shared across cells",
                "rows": self.rows,
            },
            indent=2,
        )


def _hypothesis_df(hypothesis: Hypothesis, p: int) -> int:
    return 2 * (p - 1) if hypothesis == "global" else 2


def _check_hypothesis(hypothesis: Hypothesis, p: int) -> Hypothesis:
    if hypothesis == "global":
        return hypothesis
    lab = int(hypothesis)
    if not 2 <= lab <= p:
        raise ValueError(f"hypothesis must be 'global' or a lab in 2..{p}, got {hypothesis!r}")
    return lab


def replicate_statistic(truth: TrueParameters, seed: int, hypothesis: Hypothesis) -> float:
    """Simulate, fit and return the Wald statistic; ``nan`` marks a failed fit."""
    data = simulate_dataset(truth, seed)
    try:
        fit = fit_em(data, truth.design)
        if not fit.converged:
            return math.nan
        if hypothesis == "global":
            return wald_global(fit).statistic
        return wald_individual(fit, int(hypothesis)).statistic
    except ProftestError:
        return math.nan


def _chunk(args):
    truth, master, indices, hypothesis = args
    return [replicate_statistic(truth, stream_seed(master, r), hypothesis) for r in indices]


def run_replications(
    truth: TrueParameters, replications: int, master_seed: int, hypothesis: Hypothesis = "global", workers: int = 1
) -> np.ndarray:
    """Wald statistics of ``replications`` independent data sets (``nan`` = failure).

    Output is identical for any ``workers``: replication ``r`` always uses
    ``stream_seed(master_seed, r)``.
    """
    hypothesis = _check_hypothesis(hypothesis, truth.design.p)
    if workers <= 1:
        return np.array(_chunk((truth, master_seed, range(replications), hypothesis)))
    bounds = np.linspace(0, replications, 4 * workers + 1).astype(int)
    jobs = [(truth, master_seed, range(lo, hi), hypothesis) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, jobs))
    return np.array([v for part in parts for v in part])


def _rows_for(stats: np.ndarray, levels, df: int, base: dict) -> list:
    ok = stats[~np.isnan(stats)]
    n_eff = int(ok.size)
    rows = []
    for level in levels:
        crit = chi2_quantile(1.0 - level, df)
        rate = float(np.mean(ok > crit)) if n_eff else math.nan
        se = math.sqrt(rate * (1.0 - rate) / n_eff) if n_eff else math.nan
        rows.append(
            dict(base, level=float(level), rate=rate, se=se, n_effective=n_eff, n_failed=int(stats.size - n_eff))
        )
    return rows


def empirical_size_study(config: StudyConfig, hypothesis: Hypothesis = "global") -> StudyResult:
    """Rejection rates under the no-bias truth for every regime and replica count.

    A replication rejects when its p-value is below the nominal level (the
    statistic exceeds the upper chi-square quantile).  Failed fits are
    excluded and counted in ``n_failed``.
    """
    hypothesis = _check_hypothesis(hypothesis, config.labs)
    df = _hypothesis_df(hypothesis, config.labs)
    result = StudyResult("size", hypothesis, config)
    for regime in config.regimes:
        for n in config.replica_counts:
            truth = reference_truth(regime, n, config.labs)
            stats = run_replications(truth, config.replications, config.seed, hypothesis, config.workers)
            result.statistics[(regime, n)] = stats
            base = dict(replica_count=n, regime=regime, deviation=0.0, hypothesis=hypothesis)
            result.rows.extend(_rows_for(stats, config.levels, df, base))
    return result


def power_study(config: StudyConfig, hypothesis: Hypothesis = "global") -> StudyResult:
    """Rejection rate at ``config.power_level`` along the deviation grid."""
    if not config.deviations:
        raise ValueError("deviation grid is empty")
    hypothesis = _check_hypothesis(hypothesis, config.labs)
    df = _hypothesis_df(hypothesis, config.labs)
    result = StudyResult("power", hypothesis, config)
    for regime in config.regimes:
        for n in config.replica_counts:
            base_truth = reference_truth(regime, n, config.labs)
            for d in config.deviations:
                truth = perturbed(base_truth, config.perturbed_labs, config.alpha_scale * d, config.beta_scale * d)
                stats = run_replications(truth, config.replications, config.seed, hypothesis, config.workers)
                result.statistics[(regime, n, float(d))] = stats
                base = dict(replica_count=n, regime=regime, deviation=float(d), hypothesis=hypothesis)
                result.rows.extend(_rows_for(stats, (config.power_level,), df, base))
    return result
