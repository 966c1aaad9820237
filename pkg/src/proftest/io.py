"""Reading measurements and designs, writing fit and test reports.

Floats are written in shortest round-trip form (``repr``) so every emitted
file re-parses to the identical doubles.  ``tests.csv`` additionally carries
6-decimal display columns.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .em import FitResult
from .errors import DimensionError, InputError
from .inference import REPORT_METHODS, EllipseSpec, WaldReport
from .model import Measurements, StudyDesign

SCHEMA_VERSION = 1
MEASUREMENT_HEADER = ("lab", "level", "replicate", "value")

Source = Union[str, os.PathLike, TextIO]


@dataclass(frozen=True)
class LabeledMeasurements:
    """Measurements plus the original laboratory and level identifiers.

    ``labs[0]`` is the reference laboratory.
    """

    data: Measurements
    labs: tuple[str, ...]
    levels: tuple[str, ...]


def _open_text(source: Source):
    if hasattr(source, "read"):
        return source, False
    return open(source, newline="", encoding="utf-8"), True


def parse_measurements(source: Source, reference: Optional[str] = None) -> LabeledMeasurements:
    """Parse a ``lab,level,replicate,value`` CSV.

    Labs and levels keep their order of first appearance, except that
    ``reference`` (default: the first lab in the file) is moved to index 0.
    Every lab needs the same number of replicates at every level.
    """
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("measurement file is empty") from None
        if tuple(h.strip().lower() for h in header) != MEASUREMENT_HEADER:
            raise InputError(f"line 1: expected header {','.join(MEASUREMENT_HEADER)}, got {','.join(header)}")
        cells: dict[tuple[str, str], list[float]] = {}
        seen: dict[tuple[str, str, str], int] = {}
        labs: list[str] = []
        levels: list[str] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise InputError(f"line {line}: expected 4 fields, got {len(row)}")
            lab, level, rep, raw = (c.strip() for c in row)
            if not lab or not level or not rep:
                raise InputError(f"line {line}: empty lab, level or replicate")
            try:
                value = float(raw)
            except ValueError:
                raise InputError(f"line {line}: value {raw!r} is not a number") from None
            if not np.isfinite(value):
                raise InputError(f"line {line}: value {raw!r} is not finite")
            key = (lab, level, rep)
            if key in seen:
                raise InputError(f"line {line}: duplicate key {key} (first seen on line {seen[key]})")
            seen[key] = line
            if lab not in labs:
                labs.append(lab)
            if level not in levels:
                levels.append(level)
            cells.setdefault((lab, level), []).append(value)
    finally:
        if close:
            fh.close()

    if not labs:
        raise InputError("measurement file has no data rows")
    if reference is None:
        reference = labs[0]
    if reference not in labs:
        raise InputError(f"reference lab {reference!r} not present in the data")
    labs.remove(reference)
    labs.insert(0, reference)
    if len(labs) < 2:
        raise InputError("need measurements from at least 2 laboratories")

    blocks = []
    for lab in labs:
        counts = []
        for level in levels:
            vals = cells.get((lab, level))
            if not vals:
                raise InputError(f"lab {lab!r} has no measurements at level {level!r}")
            counts.append(len(vals))
        if len(set(counts)) != 1:
            detail = ", ".join(f"{lv}:{c}" for lv, c in zip(levels, counts))
            raise InputError(f"lab {lab!r} has unequal replicate counts across levels ({detail})")
        blocks.append(np.array([cells[(lab, level)] for level in levels]))
    return LabeledMeasurements(Measurements(tuple(blocks)), tuple(labs), tuple(levels))


def write_measurements(
    data: Measurements,
    target: Source,
    labs: Optional[Sequence[str]] = None,
    levels: Optional[Sequence[str]] = None,
) -> None:
    """Write ``data`` in the format read by :func:`parse_measurements`."""
    labs = [str(i) for i in range(1, data.p + 1)] if labs is None else list(labs)
    levels = [str(j) for j in range(1, data.m + 1)] if levels is None else list(levels)
    if len(labs) != data.p or len(levels) != data.m:
        raise DimensionError("label lists do not match the data")
    fh, close = (target, False) if hasattr(target, "write") else (open(target, "w", newline="", encoding="utf-8"), True)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        for lab, block in zip(labs, data.y):
            for level, row in zip(levels, block):
                for k, v in enumerate(row, start=1):
                    w.writerow((lab, level, k, repr(float(v))))
    finally:
        if close:
            fh.close()


def _float_list(obj, name: str) -> list:
    if not isinstance(obj, list):
        raise InputError(f"{name} must be an array")
    out = []
    for v in obj:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InputError(f"{name} must contain numbers, got {v!r}")
        out.append(float(v))
    return out


def parse_design(source: Source, replicas: Optional[Sequence[int]] = None) -> StudyDesign:
    """Read a JSON design with keys ``sigma2_x``, ``sigma2`` and ``replicas``.

    ``replicas`` overrides the file's replica counts (e.g. to match data).
    """
    fh, close = _open_text(source)
    try:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"design file is not valid JSON: {exc}") from None
    finally:
        if close:
            fh.close()
    if not isinstance(doc, dict):
        raise InputError("design file must hold a JSON object")
    missing = [k for k in ("sigma2_x", "sigma2") if k not in doc]
    if replicas is None and "replicas" not in doc:
        missing.append("replicas")
    if missing:
        raise InputError(f"design file lacks keys: {', '.join(missing)}")
    sigma2_x = _float_list(doc["sigma2_x"], "sigma2_x")
    if not isinstance(doc["sigma2"], list):
        raise InputError("sigma2 must be an array of arrays")
    rows = [_float_list(r, f"sigma2[{i + 1}]") for i, r in enumerate(doc["sigma2"])]
    for i, r in enumerate(rows, start=1):
        if len(r) != len(sigma2_x):
            raise DimensionError(f"sigma2 row {i} has {len(r)} entries, sigma2_x has {len(sigma2_x)}")
    if replicas is None:
        reps = doc["replicas"]
        if not isinstance(reps, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in reps):
            raise InputError("replicas must be an array of integers")
        replicas = reps
    return StudyDesign(np.array(sigma2_x), np.array(rows), tuple(replicas))


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (e.g. ``demo_design.json``)."""
    return Path(str(resources.files("proftest") / "data" / name))


def _num(x) -> list:
    return [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]


def fit_to_dict(fit: FitResult, labs: Optional[Sequence[str]] = None, levels: Optional[Sequence[str]] = None) -> dict:
    th = fit.theta_hat
    return {
        "schema_version": SCHEMA_VERSION,
        "labs": None if labs is None else list(labs),
        "levels": None if levels is None else list(levels),
        "mu_x": _num(th.mu_x),
        "alpha": _num(th.alpha),
        "beta": _num(th.beta),
        "loglik": fit.loglik,
        "loglik_trace": _num(fit.loglik_trace),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "score": _num(fit.score),
        "information_bias_block": [_num(r) for r in fit.info_bias],
        "flags": list(fit.flags),
        "information_error": fit.info_error,
    }


def _fmt6(x: float) -> str:
    return f"{x:.6f}"


TESTS_COLUMNS = (
    ["lab", "label", "statistic", "df", "p_raw"]
    + [f"p_{m}" for m in REPORT_METHODS]
    + ["p_bonferroni", "verdict", "method", "familywise_level"]
    + ["p_raw_6dp"]
    + [f"p_{m}_6dp" for m in REPORT_METHODS]
)


def tests_rows(report: WaldReport) -> list[dict]:
    rows = []
    for t in report.labs:
        row = {
            "lab": t.lab,
            "label": t.label if t.label is not None else "",
            "statistic": repr(float(t.statistic)),
            "df": t.df,
            "p_raw": repr(float(t.p_raw)),
        }
        for m in REPORT_METHODS:
            row[f"p_{m}"] = repr(t.p_adjusted[m])
        row["p_bonferroni"] = repr(t.p_adjusted["bonferroni"])
        row["verdict"] = "reject" if t.reject else "retain"
        row["method"] = report.method
        row["familywise_level"] = repr(report.alpha)
        row["p_raw_6dp"] = _fmt6(t.p_raw)
        for m in REPORT_METHODS:
            row[f"p_{m}_6dp"] = _fmt6(t.p_adjusted[m])
        rows.append(row)
    return rows


def _write_csv(path: Path, columns, rows, preamble: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_tests_csv(report: WaldReport, path: Path) -> None:
    pre = [
        f"schema_version={SCHEMA_VERSION}",
        f"global_statistic={float(report.q_global)!r}",
        f"global_df={report.df_global}",
        f"global_p={float(report.p_global)!r}",
    ]
    _write_csv(path, TESTS_COLUMNS, tests_rows(report), pre)


def write_ellipse_csv(ell: EllipseSpec, path: Path) -> None:
    pre = [
        f"schema_version={SCHEMA_VERSION}",
        f"lab={ell.lab}",
        f"center_alpha={float(ell.center[0])!r}",
        f"center_beta={float(ell.center[1])!r}",
        f"level={ell.level!r}",
        f"radius2={ell.radius2!r}",
    ]
    rows = [{"alpha": repr(float(a)), "beta": repr(float(b))} for a, b in ell.boundary]
    _write_csv(path, ("alpha", "beta"), rows, pre)


def read_commented_csv(path: Source) -> tuple[dict, list[dict]]:
    """Read a CSV written by this module: ``# key=value`` preamble, then a table."""
    fh, close = _open_text(path)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    return meta, list(csv.DictReader(io.StringIO("\n".join(body))))


def emit_report(
    fit: FitResult,
    wald: Optional[WaldReport],
    ellipses: Sequence[EllipseSpec],
    directory: Union[str, os.PathLike],
    labs: Optional[Sequence[str]] = None,
    levels: Optional[Sequence[str]] = None,
) -> list[Path]:
    """Write ``fit.json``, ``tests.csv`` and one ``ellipse_<lab>.csv`` per region."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from None
    written = []
    path = out / "fit.json"
    path.write_text(json.dumps(fit_to_dict(fit, labs, levels), indent=2) + "\n", encoding="utf-8")
    written.append(path)
    if wald is not None:
        path = out / "tests.csv"
        write_tests_csv(wald, path)
        written.append(path)
    for ell in ellipses:
        path = out / f"ellipse_{ell.lab}.csv"
        write_ellipse_csv(ell, path)
        written.append(path)
    return written


def format_table(report: WaldReport) -> str:
    """Plain-text table of raw and adjusted p-values with 6 decimals."""
    head = ["lab", "Q_w", "raw"] + list(REPORT_METHODS) + ["verdict"]
    lines = ["  ".join(f"{h:>10}" for h in head)]
    for t in report.labs:
        name = t.label if t.label else str(t.lab)
        cells = [name, f"{t.statistic:.4f}", _fmt6(t.p_raw)]
        cells += [_fmt6(t.p_adjusted[m]) for m in REPORT_METHODS]
        cells.append("reject" if t.reject else "retain")
        lines.append("  ".join(f"{c:>10}" for c in cells))
    lines.append(f"global Q_w = {report.q_global:.4f} on {report.df_global} df, p = {report.p_global:.6g}")
    return "\n".join(lines)
