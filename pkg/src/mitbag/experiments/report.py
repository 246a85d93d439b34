"""Self-contained experiment reports: JSON, a flat CSV and an optional SVG plot."""

from __future__ import annotations

import csv
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy


def env_metadata() -> dict:
    from mitbag import __version__

    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mitbag": __version__,
    }


def _plain(x):
    """Recursively convert numpy scalars and arrays for JSON."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        x = float(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


@dataclass
class ExperimentReport:
    """Config echo, raw per-point spectra, diagnostics derived from them, environment."""

    config: dict
    points: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    env: dict = field(default_factory=env_metadata)
    status: str = "ok"
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _plain({
            "config": self.config, "points": self.points, "diagnostics": self.diagnostics,
            "env": self.env, "status": self.status, "failures": self.failures,
        })

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(config=data["config"], points=data["points"], diagnostics=data["diagnostics"],
                   env=data.get("env", {}), status=data.get("status", "ok"),
                   failures=data.get("failures", []))

    def eigenvalue_table(self) -> list[tuple]:
        """``(M, h, j, E_j, residual)`` rows for every solved point."""
        rows = []
        for pt in self.points:
            spec = pt.get("spectrum")
            if not spec:
                continue
            for i, (e, r) in enumerate(zip(spec["eigenvalues"], spec["residual_norms"]), start=1):
                rows.append((pt.get("M"), pt.get("h"), i, e, r))
        return rows


def write_report(report: ExperimentReport, out, svg: bool = False) -> dict:
    """Write ``<out>.json`` and ``<out>.csv`` (and ``<out>.svg``); returns the paths."""
    out = Path(out)
    if out.suffix == ".json":
        out = out.with_suffix("")
    out.parent.mkdir(parents=True, exist_ok=True)
    paths = {"json": out.with_suffix(".json"), "csv": out.with_suffix(".csv")}
    with open(paths["json"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["M", "h", "j", "E_j", "residual"])
        for M, h, j, e, r in report.eigenvalue_table():
            w.writerow(["" if M is None else repr(float(M)), "" if h is None else repr(float(h)),
                        j, repr(float(e)), repr(float(r))])
    if svg:
        paths["svg"] = out.with_suffix(".svg")
        plot_report(report, paths["svg"])
    return {k: str(v) for k, v in paths.items()}


def load_report(path) -> ExperimentReport:
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))


def plot_report(report: ExperimentReport, path) -> None:
    """Log-log plot of the stored gap curves (or eigenvalues against the sweep variable)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    curves = report.diagnostics.get("curves", {})
    for label, c in curves.items():
        x, y = np.asarray(c["x"], float), np.abs(np.asarray(c["y"], float))
        ok = y > 0
        if ok.any():
            ax.loglog(x[ok], y[ok], "o-", label=label, ms=3)
    ax.set_xlabel(report.diagnostics.get("x_label", "M"))
    ax.set_ylabel(report.diagnostics.get("y_label", "value"))
    if curves:
        ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
