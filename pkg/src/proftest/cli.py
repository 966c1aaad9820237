"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 numerical failure (including EM
non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

from .em import EmSettings, FitResult, fit_em
from .errors import InputError, NumericalError
from .inference import ADJUST_METHODS, confidence_ellipse, wald_report
from .io import emit_report, format_table, parse_design, parse_measurements
from .simulation import StudyConfig, empirical_size_study, power_study

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

FULL_SCALE_REPLICATIONS = 10_000


class NotConvergedError(NumericalError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    data: Optional[str] = None
    design: Optional[str] = None
    reference: Optional[str] = None
    fwer: float = 0.01
    method: str = "hochberg"
    out: str = "proftest-out"
    labs: Optional[tuple[int, ...]] = None  # ellipse labs, default all
    em: EmSettings = field(default_factory=EmSettings)

    def __post_init__(self):
        if not 0 < self.fwer < 1:
            raise InputError(f"familywise error rate must lie in (0, 1), got {self.fwer}")
        if self.method not in ADJUST_METHODS:
            raise InputError(f"unknown method {self.method!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        if "em" in d:
            try:
                d["em"] = EmSettings(**d["em"])
            except (TypeError, ValueError) as exc:
                raise InputError(f"bad EM settings: {exc}") from None
        if d.get("labs") is not None:
            d["labs"] = tuple(int(v) for v in d["labs"])
        return cls(**d)


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def _analysis_config(args) -> AnalysisConfig:
    cfg = AnalysisConfig.from_dict(_load_json(args.config)) if args.config else AnalysisConfig()
    overrides = {}
    for name in ("data", "design", "reference", "fwer", "method", "out"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "lab", None):
        overrides["labs"] = tuple(args.lab)
    cfg = replace(cfg, **overrides)
    if not cfg.data or not cfg.design:
        raise InputError("both --data and --design are required (on the command line or in --config)")
    return cfg


def _fit(cfg: AnalysisConfig):
    labeled = parse_measurements(cfg.data, cfg.reference)
    design = parse_design(cfg.design)
    fit = fit_em(labeled.data, design, cfg.em)
    return labeled, fit


def _require_converged(fit: FitResult) -> None:
    if not fit.converged:
        raise NotConvergedError(f"EM did not converge in {fit.iterations} iterations")


def _print_fit(fit: FitResult, labs) -> None:
    th = fit.theta_hat
    print(f"converged={fit.converged} iterations={fit.iterations} loglik={fit.loglik!r}")
    print(f"{'lab':>8} {'alpha':>12} {'beta':>12}")
    for k in range(th.alpha.size):
        print(f"{labs[k + 1]:>8} {th.alpha[k]:12.4f} {th.beta[k]:12.4f}")
    for flag in fit.flags:
        print(f"note: {flag}")


def cmd_fit(args) -> int:
    cfg = _analysis_config(args)
    labeled, fit = _fit(cfg)
    emit_report(fit, None, [], cfg.out, labeled.labs, labeled.levels)
    _print_fit(fit, labeled.labs)
    _require_converged(fit)
    return EXIT_OK


def _run_analysis(cfg: AnalysisConfig, with_tests: bool, with_ellipses: bool):
    labeled, fit = _fit(cfg)
    _require_converged(fit)
    report = wald_report(fit, cfg.method, cfg.fwer, labeled.labs) if with_tests else None
    ellipses = []
    if with_ellipses:
        labs = cfg.labs or tuple(range(2, fit.design.p + 1))
        ellipses = [confidence_ellipse(fit, lab, 1.0 - cfg.fwer) for lab in labs]
    paths = emit_report(fit, report, ellipses, cfg.out, labeled.labs, labeled.levels)
    return labeled, fit, report, paths


def cmd_test(args) -> int:
    _, _, report, _ = _run_analysis(_analysis_config(args), True, False)
    print(format_table(report))
    return EXIT_OK


def cmd_ellipse(args) -> int:
    _, _, _, paths = _run_analysis(_analysis_config(args), False, True)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_report(args) -> int:
    labeled, fit, report, paths = _run_analysis(_analysis_config(args), True, True)
    _print_fit(fit, labeled.labs)
    print(format_table(report))
    for p in paths:
        print(p)
    return EXIT_OK


def _study_config(args) -> StudyConfig:
    d = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        d["seed"] = args.seed
    if args.full_scale:
        d["replications"] = FULL_SCALE_REPLICATIONS
    if args.replications is not None:
        d["replications"] = args.replications
    if args.workers is not None:
        d["workers"] = args.workers
    try:
        return StudyConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad study configuration: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _study_config(args)
    hyp = "global" if args.hypothesis == "global" else int(args.hypothesis)
    study = empirical_size_study if args.kind == "size" else power_study
    try:
        result = study(cfg, hyp)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = result.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.kind}.csv").write_text(text, encoding="utf-8")
        (out / f"{args.kind}.json").write_text(result.to_json() + "\n", encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _analysis_flags(p: argparse.ArgumentParser, ellipse: bool) -> None:
    p.add_argument("--data", help="measurements CSV (lab,level,replicate,value)")
    p.add_argument("--design", help="design JSON (sigma2_x, sigma2, replicas)")
    p.add_argument("--config", help="analysis configuration JSON")
    p.add_argument("--reference", help="identifier of the reference lab (default: first lab in the file)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--fwer", type=float, help="familywise error rate (default 0.01)")
    p.add_argument("--method", choices=ADJUST_METHODS, help="p-value adjustment for verdicts (default hochberg)")
    if ellipse:
        p.add_argument("--lab", type=int, action="append", help="1-based lab index (repeatable; default all)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proftest", description="Equivalence testing for proficiency studies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, ell, hlp in (
        ("fit", cmd_fit, False, "maximum likelihood fit by EM"),
        ("test", cmd_test, False, "global and per-lab Wald tests"),
        ("ellipse", cmd_ellipse, True, "joint confidence regions per lab"),
        ("report", cmd_report, True, "fit, tests and ellipses in one go"),
    ):
        p = sub.add_parser(name, help=hlp)
        _analysis_flags(p, ell)
        p.set_defaults(func=func)
    sim = sub.add_parser("simulate", help="Monte Carlo size and power studies")
    sim.add_argument("kind", choices=("size", "power"))
    sim.add_argument("--config", help="study configuration JSON (StudyConfig fields)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replications", type=int)
    sim.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE_REPLICATIONS} replications")
    sim.add_argument("--workers", type=int)
    sim.add_argument("--hypothesis", default="global", help="'global' or a lab index >= 2")
    sim.add_argument("--out", help="directory for <kind>.csv and <kind>.json")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
