"""Run manifests, CSV tables and static plots for one optimization run.

Floats are written with ``repr``, which is the shortest string that round
trips exactly, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import Measures
from .optimizer import HimoConfig, RunTrace

TRACE_HEADER = ("iter", "value", "grad_norm", "step_scale", "backtracks")
MEASURES_HEADER = ("iter", "state", "pd", "cd", "pd_norm", "cd_norm", "pd_vel", "cd_vel")
POLICY_HEADER = ("state", "action", "prob", "greedy")
PANELS = ("pd", "cd", "pd_norm", "cd_norm", "pd_vel", "cd_vel")
MANIFEST_VERSION = 1


class OutputError(OSError):
    """The output directory cannot be created or written."""


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class RunManifest:
    env: str
    config: HimoConfig
    tool_version: str
    duration_s: float
    reason: str
    final_value: float
    n_iters: int
    seed: int | None = None
    smoothing: int = 1
    started_at: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.to_dict()
        d["manifest_version"] = MANIFEST_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        d = dict(d)
        version = d.pop("manifest_version", MANIFEST_VERSION)
        if version != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {version}")
        d["config"] = HimoConfig(**d["config"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trace_csv(trace: RunTrace) -> str:
    rows = (
        (t, fmt(v), fmt(g), fmt(s), b)
        for t, (v, g, s, b) in enumerate(zip(trace.values, trace.grad_norms, trace.step_scales, trace.backtracks))
    )
    return _csv_text(TRACE_HEADER, rows)


def measures_csv(measures: Measures, state_labels) -> str:
    tables = [getattr(measures, name).values for name in PANELS]
    n_states, n_times = tables[0].shape
    rows = []
    for t in range(n_times):
        for s in range(n_states):
            rows.append((t, state_labels[s], *(fmt(tab[s, t]) for tab in tables)))
    return _csv_text(MEASURES_HEADER, rows)


def policy_csv(trace: RunTrace, model) -> str:
    pi = trace.final_policy()
    rows = []
    for i, actions in enumerate(model.action_labels):
        probs = pi.row(i)
        best = int(np.argmax(probs))
        for j, name in enumerate(actions):
            rows.append((model.state_labels[i], name, fmt(probs[j]), int(j == best)))
    return _csv_text(POLICY_HEADER, rows)


def plot_panels(measures: Measures, state_labels, out_dir: Path, highlight=()) -> list[Path]:
    """One SVG per measure panel; highlighted states are drawn on top in colour."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "himo"
    written = []
    for name in PANELS:
        values = getattr(measures, name).values
        fig, ax = plt.subplots(figsize=(6, 4))
        times = np.arange(values.shape[1])
        for s in range(values.shape[0]):
            if s not in highlight:
                ax.plot(times, values[s], color="0.75", lw=0.8)
        for s in highlight:
            ax.plot(times, values[s], lw=1.6, label=state_labels[s])
        if highlight:
            ax.legend(fontsize="small", frameon=False)
        ax.set_xlabel("planning time")
        ax.set_ylabel(name)
        fig.tight_layout()
        path = out_dir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def emit_outputs(
    out_dir,
    manifest: RunManifest,
    trace: RunTrace,
    measures: Measures,
    model,
    plots: bool = False,
    highlight=(),
) -> list[Path]:
    """Write run.json, trace.csv, measures.csv, policy.csv and optional plots."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {
            "run.json": manifest.to_json(),
            "trace.csv": trace_csv(trace),
            "measures.csv": measures_csv(measures, model.state_labels),
            "policy.csv": policy_csv(trace, model),
        }
        written = []
        for name, text in files.items():
            path = out_dir / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        if plots:
            written += plot_panels(measures, model.state_labels, out_dir, highlight)
    except OSError as exc:
        raise OutputError(f"cannot write outputs to {out_dir}: {exc}") from exc
    return written
