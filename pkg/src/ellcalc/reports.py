"""Residual statistics of a pointwise identity over a grid, with JSON/CSV output."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1
# below this the relative residual is undefined and the absolute one is used
NORMALIZER_FLOOR = 1e-14


@dataclass
class ComponentStats:
    max_abs: float
    mean_abs: float


@dataclass
class ResidualReport:
    check: str
    grid: dict
    params: dict
    components: dict[str, ComponentStats]
    max_abs_residual: float
    relative_residual: float | None
    tolerance: float
    mode: str
    passed: bool
    terms: dict[str, float] = field(default_factory=dict)
    worst_point: dict | None = None
    notes: list[str] = field(default_factory=list)
    # pointwise data, kept for CSV export only
    _points: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def from_residuals(
        cls,
        check: str,
        residuals: dict[str, np.ndarray],
        *,
        grid: dict,
        params: dict,
        tolerance: float,
        mode: str = "relative",
        normalizer: np.ndarray | None = None,
        terms: dict[str, np.ndarray] | None = None,
        coords: dict[str, np.ndarray] | None = None,
    ) -> "ResidualReport":
        """Build a report from pointwise residual arrays of equal shape.

        ``mode="relative"`` passes when max |residual| / normalizer <= tolerance
        over points whose normalizer exceeds the floor (other points are held to
        the absolute tolerance); ``mode="absolute"`` compares max |residual|.
        """
        if mode not in ("relative", "absolute"):
            raise ValueError(f"unknown mode {mode!r}")
        absres = {k: np.abs(np.asarray(v, dtype=float)) for k, v in residuals.items()}
        stacked = np.stack(list(absres.values()))
        pointwise = stacked.max(axis=0)
        comps = {
            k: ComponentStats(float(np.max(v)), float(np.mean(v))) for k, v in absres.items()
        }
        max_abs = float(np.max(pointwise))

        rel = None
        rel_pointwise = np.full(pointwise.shape, np.nan)
        if normalizer is not None:
            norm = np.broadcast_to(np.asarray(normalizer, dtype=float), pointwise.shape)
            ok = norm > NORMALIZER_FLOOR
            rel_pointwise[ok] = pointwise[ok] / norm[ok]
            if np.any(ok):
                rel = float(np.max(rel_pointwise[ok]))
        if mode == "relative":
            if normalizer is None:
                raise ValueError("relative mode needs a normalizer")
            ok = np.isfinite(rel_pointwise)
            small = pointwise[~ok]
            passed = (rel is None or rel <= tolerance) and bool(np.all(small <= tolerance))
            score = np.where(ok, rel_pointwise, pointwise)
        else:
            passed = max_abs <= tolerance
            score = pointwise
        passed = passed and bool(np.all(np.isfinite(stacked)))

        worst = None
        points = {}
        if coords:
            idx = np.unravel_index(int(np.nanargmax(score)), score.shape)
            worst = {k: float(np.asarray(v)[idx]) for k, v in coords.items()}
            worst.update({k: float(np.asarray(residuals[k])[idx]) for k in residuals})
            points = {k: np.asarray(v, dtype=float).ravel() for k, v in coords.items()}
            for k, v in residuals.items():
                points[f"residual_{k}"] = np.asarray(v, dtype=float).ravel()
            points["rel_residual"] = rel_pointwise.ravel()
        term_table = {k: float(np.max(np.abs(v))) for k, v in (terms or {}).items()}
        return cls(
            check=check,
            grid=grid,
            params=params,
            components=comps,
            max_abs_residual=max_abs,
            relative_residual=rel,
            tolerance=tolerance,
            mode=mode,
            passed=bool(passed),
            terms=term_table,
            worst_point=worst,
            _points=points,
        )

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "params": self.params,
            "grid": self.grid,
            "components": {
                k: {"max_abs": v.max_abs, "mean_abs": v.mean_abs}
                for k, v in self.components.items()
            },
            "max_abs_residual": self.max_abs_residual,
            "relative_residual": self.relative_residual,
            "tolerance": self.tolerance,
            "mode": self.mode,
            "passed": self.passed,
            "terms": self.terms,
            "worst_point": self.worst_point,
            "notes": list(self.notes),
        }

    def csv_text(self) -> str:
        """One row per grid point: phi, theta, residual_dphi, residual_dtheta, rel_residual."""
        if not self._points:
            raise ValueError("report carries no pointwise data")
        columns = ["phi", "theta", "residual_dphi", "residual_dtheta", "rel_residual"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        n = len(self._points["phi"])
        for i in range(n):
            writer.writerow(
                [_fmt(self._points[c][i]) if c in self._points else "" for c in columns]
            )
        return buf.getvalue()


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else format(float(x), ".17g")


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"


def _clean(x):
    # non-finite floats become null so the output stays strict JSON
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)) and not np.isfinite(x):
        return None
    return x


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
