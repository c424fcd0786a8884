"""Run reports: what ran, on which config, what came out."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

FIELD_ORDER = ("experiment", "recipe_version", "config_digest", "seed", "metrics", "outputs", "wall_time_s")


@dataclass
class RunReport:
    experiment: str
    recipe_version: str
    config_digest: str
    seed: int = 0
    metrics: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in FIELD_ORDER}
        d["metrics"] = {k: self.metrics[k] for k in sorted(self.metrics)}
        d["outputs"] = list(self.outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**{k: d[k] for k in FIELD_ORDER if k in d})

    def metrics_json(self) -> str:
        """Canonical metrics text; identical runs give identical bytes."""
        return json.dumps(self.to_dict()["metrics"], indent=2, allow_nan=True)


def emit_report(report: RunReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, allow_nan=True) + "\n"
    if fmt == "text":
        d = report.to_dict()
        lines = [f"experiment: {d['experiment']} (recipe {d['recipe_version']})",
                 f"config digest: {d['config_digest']}",
                 f"seed: {d['seed']}",
                 f"wall time: {d['wall_time_s']:.2f} s",
                 "metrics:"]
        lines += [f"  {k}: {_show(v)}" for k, v in d["metrics"].items()]
        lines.append("outputs:")
        lines += [f"  {p}" for p in d["outputs"]]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def _show(v) -> str:
    if isinstance(v, float):
        return format(v, ".6g")
    if isinstance(v, list):
        return "[" + ", ".join(_show(x) for x in v) + "]"
    return str(v)
