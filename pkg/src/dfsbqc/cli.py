"""Command-line entry point: ``dfsbqc sweep|coeff-surface|blindness|verify``."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .channel import DeltaScheme, NoiseParams
from .protocols import Protocol


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfsbqc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="Monte Carlo vs analytic success probabilities over a grid")
    _add_common(sweep)
    sweep.add_argument("--protocol", choices=[p.value for p in Protocol])
    sweep.add_argument("--T", help="single transmission value")
    sweep.add_argument("--T-grid", dest="T_grid", help="comma list or start:stop:count")
    sweep.add_argument("--N", help="pairs per batch; comma list allowed")
    sweep.add_argument("--mu", help="mean pulse photon number; comma list allowed")
    sweep.add_argument("--a2", type=float, help="|a|^2")
    sweep.add_argument("--d2", type=float, help="|d|^2")
    sweep.add_argument("--scheme", choices=[s.value for s in DeltaScheme], help="noise parameter source")
    sweep.add_argument("--deltas", type=int, help="number of sampled noise parameters for random schemes")
    sweep.add_argument("--trials", type=int)
    sweep.add_argument("--coherent-path", dest="coherent_path", choices=["sampling", "fock"])
    sweep.add_argument("--cutoff", type=int)

    surface = sub.add_parser("coeff-surface", help="large-mu p/T over the (|a|, |d|) square")
    _add_common(surface)
    surface.add_argument("--resolution", type=int)

    blind = sub.add_parser("blindness", help="exact blindness identities as CSV verdicts")
    _add_common(blind)
    blind.add_argument("--mu", type=float)
    blind.add_argument("--cutoff", type=int)

    verify = sub.add_parser("verify", help="run the invariant suite; exit code 0 iff all pass")
    _add_common(verify)
    verify.add_argument("--mu", type=float)
    return parser


def _merged(args: argparse.Namespace) -> dict[str, str]:
    """Config-file values overridden by any flag given on the command line."""
    values = harness.load_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        values[key] = str(value)
    return values


def _sweep_spec(v: dict[str, str]) -> harness.SweepSpec:
    if "protocol" not in v:
        raise SystemExit("sweep needs --protocol")
    if "T_grid" in v:
        t_grid = harness.parse_grid(v["T_grid"])
    elif "T" in v:
        t_grid = harness.parse_grid(v["T"])
    else:
        t_grid = harness.parse_grid("0:1:11")
    phases = tuple(float(v.get(f"channel.phase_{x}", 0.0)) for x in "abcd")
    scheme = v.get("scheme", DeltaScheme.FIXED.value)
    return harness.SweepSpec(
        protocol=Protocol(v["protocol"]),
        T_grid=t_grid,
        N_grid=tuple(int(x) for x in v.get("N", "1").split(",")),
        mu_grid=harness.parse_grid(v.get("mu", "0")),
        a_abs2=float(v.get("a2", 0.5)),
        d_abs2=float(v.get("d2", 0.5)),
        phases=phases,
        delta_scheme=DeltaScheme(scheme),
        delta_samples=int(v.get("deltas", 1)),
        trials=int(v.get("trials", harness.DEFAULT_TRIALS)),
        seed=int(v.get("seed", harness.DEFAULT_SEED)),
        out=v.get("out"),
        coherent_path=v.get("coherent_path", "sampling"),
        cutoff=int(v["cutoff"]) if "cutoff" in v else None,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    v = _merged(args)
    out = v.get("out")
    if args.command == "sweep":
        spec = _sweep_spec(v)
        result = harness.run_sweep(spec)
        harness.write_text(result.to_csv(), out)
        return 0
    if args.command == "coeff-surface":
        harness.write_text(harness.coeff_surface_csv(int(v.get("resolution", 21))), out)
        return 0
    if args.command == "blindness":
        cutoff = int(v["cutoff"]) if "cutoff" in v else None
        text, ok = harness.blindness_csv(float(v.get("mu", 4.0)), cutoff)
        harness.write_text(text, out)
        return 0 if ok else 1
    checks = harness.run_verify(int(v.get("seed", harness.DEFAULT_SEED)), mu=float(v.get("mu", 4.0)))
    lines = [f"{'PASS' if c.passed else 'FAIL'} {c.name} {c.detail}".rstrip() for c in checks]
    failed = [c.name for c in checks if not c.passed]
    lines.append(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    harness.write_text("\n".join(lines) + "\n", out)
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
