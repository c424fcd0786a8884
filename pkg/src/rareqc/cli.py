"""Batch command line.

Exit codes: 0 success, 2 configuration error, 3 physics-constraint error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, PhysicsError
from .recipes import RECIPES, run_experiment
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS = 0, 2, 3

# subcommand -> (recipe, {flag dest: (config section, field)})
COMMANDS = {
    "pit": ("fig2", {}),
    "burnback": ("fig3-burnback", {"peak_width": ("pumping", "peak_width"),
                                   "peak_frequency": ("pumping", "peak_frequency")}),
    "gate": ("dark-gate", {"theta": ("gates", "theta"), "phi": ("gates", "phi"), "grid": ("gates", "grid")}),
    "tomo": ("six-state-tomo", {}),
    "grape": ("grape", {"bandwidth": ("optctrl", "bandwidth"), "duration": ("optctrl", "duration")}),
    "grape-study": ("fig6-grape-study", {}),
    "readout": ("readout", {"samples": ("readout", "n_samples")}),
    "chainmap": ("chainmap", {}),
    "scaling": ("scaling", {"p": ("readout", "scaling_p"), "n": ("readout", "scaling_n")}),
}
PULSE_COMMANDS = {"synth": "fig4-sechyp", "beat": "fig5-beat"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--format", choices=("json", "text"), default="text", help="report format on stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rareqc", description="Rare-earth-ion quantum computer simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pit", help="simple and optimal spectral pit")
    p.add_argument("--low", type=float)
    p.add_argument("--high", type=float)
    _common(p)

    p = sub.add_parser("burnback", help="burn a |0> qubit peak back into the pit")
    p.add_argument("--peak-width", type=float)
    p.add_argument("--peak-frequency", type=float)
    _common(p)

    p = sub.add_parser("pulse", help="pulse synthesis and beat characterisation")
    psub = p.add_subparsers(dest="pulse_command", required=True)
    _common(psub.add_parser("synth", help="sechyp waveform and ensemble transfer"))
    pb = psub.add_parser("beat", help="heterodyne beat round-trip")
    pb.add_argument("--reference-offset", type=float)
    _common(pb)

    p = sub.add_parser("gate", help="dark-state gate fidelity")
    p.add_argument("--theta", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--grid", type=int)
    _common(p)

    p = sub.add_parser("tomo", help="six-state tomography")
    p.add_argument("--no-decoherence", action="store_true")
    _common(p)

    p = sub.add_parser("grape", help="optimal-control state transfer")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--duration", type=float)
    _common(p)

    _common(sub.add_parser("grape-study", help="efficiency versus bandwidth"))

    p = sub.add_parser("readout", help="photon counting and discrimination")
    p.add_argument("--samples", type=int)
    _common(p)

    _common(sub.add_parser("chainmap", help="map a planted qubit chain"))

    p = sub.add_parser("scaling", help="ensemble scaling and Stark shift")
    p.add_argument("--p", type=float)
    p.add_argument("--n", type=int)
    _common(p)

    p = sub.add_parser("recipe", help="run a named recipe")
    p.add_argument("name", help="one of: " + ", ".join(sorted(RECIPES)))
    _common(p)

    sub.add_parser("list", help="list recipes")
    return ap


def _overrides(args, flags: dict) -> dict:
    sections: dict = {}
    for dest, (section, key) in flags.items():
        v = getattr(args, dest, None)
        if v is not None:
            sections.setdefault(section, {})[key] = v
    return sections


def _resolve(args):
    """Recipe name and config overrides for the parsed command."""
    if args.command == "recipe":
        return args.name, {}
    if args.command == "pulse":
        ov = {}
        if getattr(args, "reference_offset", None) is not None:
            ov = {"pulse": {"reference_offset": args.reference_offset}}
        return PULSE_COMMANDS[args.pulse_command], ov
    name, flags = COMMANDS[args.command]
    ov = _overrides(args, flags)
    if args.command == "pit" and (args.low is not None or args.high is not None):
        lo = -9.0 if args.low is None else args.low
        hi = 9.0 if args.high is None else args.high
        ov.setdefault("pumping", {})["pit"] = [lo, hi]
    if args.command == "tomo" and args.no_decoherence:
        ov.setdefault("dynamics", {})["decoherence"] = False
    return name, ov


def _merge(cfg_dict: dict, ov: dict) -> dict:
    out = dict(cfg_dict)
    for section, vals in ov.items():
        out[section] = {**out.get(section, {}), **vals}
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(RECIPES):
            r = RECIPES[name]
            print(f"{name:18s} v{r.version}  {r.summary}")
        return EXIT_OK
    try:
        name, ov = _resolve(args)
        base = load_config(args.config)
        data = _merge(base.model_dump(mode="json"), ov)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.out is not None:
            data["output_dir"] = args.out
        cfg = load_config(None, data)
        report = run_experiment(name, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    sys.stdout.write(emit_report(report, args.format))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
