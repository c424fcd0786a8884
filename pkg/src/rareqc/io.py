"""CSV and JSON artifacts.

Floats are written with 17 significant digits so files round-trip exactly
and identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SPECTRUM_HEADER = ("freq_MHz", "alphaL")
IQ_HEADER = ("t_us", "I_MHz", "Q_MHz")
ENVELOPE_HEADER = ("t_us", "envelope", "phase_rad")
POPULATION_HEADER = ("t_us", "p1", "p2", "p3", "p4", "p5", "p6")
STUDY_HEADER = ("bandwidth_MHz", "eff_two_level", "eff_multi_level")


def _fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_csv(path, header, columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(cols) != len(header):
        raise ValueError("one column per header field")
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("columns differ in length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Header tuple and a dict of float columns."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    return header, {h: data[:, i] for i, h in enumerate(header)}


def write_spectrum(path, grid, spectrum) -> Path:
    return write_csv(path, SPECTRUM_HEADER, (grid, spectrum))


def write_iq(path, wave) -> Path:
    return write_csv(path, IQ_HEADER, (wave.times, wave.samples.real, wave.samples.imag))


def write_envelope(path, times, envelope, phase) -> Path:
    return write_csv(path, ENVELOPE_HEADER, (times, envelope, phase))


def write_populations(path, times, pops) -> Path:
    pops = np.asarray(pops, float)
    return write_csv(path, POPULATION_HEADER, (times, *pops.T))


def write_study(path, rows) -> Path:
    return write_csv(path, STUDY_HEADER, ([r.bandwidth for r in rows], [r.eff_two_level for r in rows],
                                          [r.eff_multi_level for r in rows]))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def state_dump(rho) -> dict:
    """Density matrix as nested ``{"re": ..., "im": ...}`` lists."""
    rho = np.asarray(rho, complex)
    return {"dim": int(rho.shape[0]), "re": rho.real.tolist(), "im": rho.imag.tolist()}


def state_load(d) -> np.ndarray:
    return np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float)
