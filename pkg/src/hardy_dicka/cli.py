"""Command-line interface: key-rate tables, noisy rates, bias comparison,
robust self-testing grids, protocol simulation and entanglement tables.

Every command is deterministic given its flags and seed. CSV output uses
a header row and scientific notation with nine significant digits so runs
can be compared byte for byte. Exit codes: 0 success, 2 protocol abort,
64 usage error, 70 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, hardy, keyrate, npa, protosim, qstate

EXIT_OK = 0
EXIT_ABORT = 2
EXIT_USAGE = 64
EXIT_NUMERIC = 70


def _fmt(x: float) -> str:
    return f"{x:.9e}"


def _parse_grid(text: str) -> list:
    """Comma list ("0,0.001") or start:stop:step range, inclusive stop."""
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [start + k * step for k in range(n)]
    return [float(t) for t in text.split(",")]


def _write_output(text: str, out: str, manifest: dict) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.write_text(text)
    digest = hashlib.sha256(text.encode()).hexdigest()
    manifest["outputs"].append({"path": str(path), "sha256": digest})
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _manifest(args) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()
    ).hexdigest()
    return {
        "command": args.command,
        "config_digest": digest,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "outputs": [],
        "wall_time_s": None,
        "started": time.time(),
    }


def cmd_keyrate(args) -> int:
    lo, hi = args.n_min, args.n_max
    if not (2 <= lo <= hi <= 12):
        print("error: party range must satisfy 2 <= min <= max <= 12", file=sys.stderr)
        return EXIT_USAGE
    rate = keyrate.protocol1_rate if args.protocol == 1 else keyrate.protocol2_rate
    lines = ["n,rate"]
    for n in range(lo, hi + 1):
        lines.append(f"{n},{_fmt(rate(n))}")
    manifest = _manifest(args)
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output("\n".join(lines) + "\n", args.out, manifest)
    return EXIT_OK


def cmd_noisy_keyrate(args) -> int:
    params = hardy.hardy_params(3)
    warnings = 0
    lines = ["eps1,eps2,p_guess,qber,key_rate"]
    records: list = []
    for eps2 in _parse_grid(args.eps2):
        for eps1 in _parse_grid(args.eps1):
            if eps1 >= params.p_max:
                lines.append(f"{_fmt(eps1)},{_fmt(eps2)},error,error,error")
                warnings += 1
                continue
            noise = keyrate.NoiseParams(eps1, eps2)
            try:
                pg = npa.guessing_probability(noise, level=args.level, record_sink=records)
                pg = min(max(pg, 0.5), 1.0)
                qber = keyrate.qber_bound(params, noise)
                k = keyrate.dw_rate(params, noise, pg)
                lines.append(
                    f"{_fmt(eps1)},{_fmt(eps2)},{_fmt(pg)},{_fmt(qber)},{_fmt(k)}"
                )
            except (npa.NpaError, keyrate.KeyrateError) as exc:
                lines.append(f"{_fmt(eps1)},{_fmt(eps2)},failed,failed,failed")
                print(f"warning: ({eps1}, {eps2}): {exc}", file=sys.stderr)
                warnings += 1
    manifest = _manifest(args)
    manifest["solves"] = records
    manifest["warnings"] = warnings
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output("\n".join(lines) + "\n", args.out, manifest)
    if warnings:
        print(f"{warnings} grid point(s) flagged", file=sys.stderr)
    return EXIT_OK


def cmd_bias(args) -> int:
    grid = _parse_grid(args.eps)
    if any(not 0.0 <= e <= 0.3 for e in grid):
        print("error: bias grid must stay within [0, 0.3]", file=sys.stderr)
        return EXIT_USAGE
    records: list = []
    lines = ["eps,guessing_probability,worst_guess,key_term"]
    for eps in grid:
        try:
            if args.inequality == "hardy":
                base = keyrate.hardy_setting_bias()
                if eps >= min(base, 1 - base):
                    raise keyrate.KeyrateError(f"bias {eps} too large for base {base:.4f}")
                avg = keyrate.hardy_biased_guess(keyrate.BiasModel(base, eps))
                worst = avg
            else:
                maker = (
                    keyrate.holz_expression
                    if args.inequality == "holz"
                    else keyrate.parity_chsh_expression
                )
                target = maker().quantum_max
                if eps == 0.0:
                    vals = [npa.bell_guess(maker(), target, level=args.level,
                                           record_sink=records)]
                else:
                    bias = keyrate.BiasModel(0.5, eps)
                    vals = []
                    for pattern in keyrate.SIGN_PATTERNS:
                        dist = keyrate.biased_setting_distribution(bias, pattern)
                        vals.append(
                            npa.bell_guess(maker(dist), target, level=args.level,
                                           record_sink=records)
                        )
                avg = float(np.mean(np.clip(vals, 0.5, 1.0)))
                worst = float(np.max(np.clip(vals, 0.5, 1.0)))
            key_term = max(0.0, -np.log2(worst))
            lines.append(f"{_fmt(eps)},{_fmt(avg)},{_fmt(worst)},{_fmt(key_term)}")
        except (npa.NpaError, keyrate.KeyrateError) as exc:
            lines.append(f"{_fmt(eps)},failed,failed,failed")
            print(f"warning: eps={eps}: {exc}", file=sys.stderr)
    manifest = _manifest(args)
    manifest["solves"] = records
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output("\n".join(lines) + "\n", args.out, manifest)
    return EXIT_OK


def cmd_robust(args) -> int:
    bound = (
        npa.fidelity_bound if args.target == "fidelity" else npa.measurement_merit_bound
    )
    records: list = []
    lines = ["eps1,eps2,bound,level,matrix_dim"]
    code = EXIT_OK
    for eps2 in _parse_grid(args.eps2):
        for eps1 in _parse_grid(args.eps1):
            try:
                value = bound(
                    keyrate.NoiseParams(eps1, eps2), level=args.level,
                    record_sink=records,
                )
                dim = records[-1]["matrix_dim"] if records else 0
                lines.append(
                    f"{_fmt(eps1)},{_fmt(eps2)},{_fmt(value)},{args.level},{dim}"
                )
            except npa.NpaError as exc:
                message = str(exc)
                if "cap" in message:
                    print(
                        f"error: {message}; lower --level or raise "
                        f"{npa.SIZE_CAP_ENV}",
                        file=sys.stderr,
                    )
                    return EXIT_NUMERIC
                lines.append(f"{_fmt(eps1)},{_fmt(eps2)},failed,{args.level},0")
                print(f"warning: ({eps1}, {eps2}): {message}", file=sys.stderr)
    manifest = _manifest(args)
    manifest["solves"] = records
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output("\n".join(lines) + "\n", args.out, manifest)
    return code


def cmd_simulate(args) -> int:
    if args.config:
        config = protosim.ProtocolConfig.from_json(Path(args.config).read_text())
    else:
        config = protosim.ProtocolConfig(
            n_parties=args.n, n_rounds=args.rounds, protocol=args.protocol,
            seed=args.seed, test_fraction=args.test_fraction,
            eps1=args.eps1, eps2=args.eps2, noise=args.noise,
        )
    transcript = None
    if args.transcript:
        base = Path(args.out) if args.out else Path("run_stats.json")
        transcript = str(base.with_suffix(".transcript.csv"))
    stats = protosim.run(config, transcript=transcript)
    manifest = _manifest(args)
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output(stats.to_json() + "\n", args.out, manifest)
    return EXIT_ABORT if stats.aborted else EXIT_OK


def cmd_entanglement(args) -> int:
    if args.state == "ghz":
        state = qstate.Ket.ghz(args.n)
    elif args.state == "hardy":
        state = hardy.build_hardy_state(hardy.hardy_params(args.n))
    else:
        print(f"error: unknown state {args.state!r}", file=sys.stderr)
        return EXIT_USAGE
    cut = qstate.Bipartition([int(q) for q in args.cut.split(",")])
    rec = qstate.entanglement_monotones(state, cut, renyi_order=args.order)
    lines = [
        "quantity,value",
        f"concurrence,{_fmt(rec.concurrence)}",
        f"negativity,{_fmt(rec.negativity)}",
        f"log_negativity,{_fmt(rec.log_negativity)}",
        f"entanglement_entropy,{_fmt(rec.entanglement_entropy)}",
        f"renyi_entropy,{_fmt(rec.renyi_entropy)}",
    ]
    manifest = _manifest(args)
    manifest["wall_time_s"] = time.time() - manifest.pop("started")
    _write_output("\n".join(lines) + "\n", args.out, manifest)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 64
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hardy-dicka", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyrate", help="ideal key rates vs party count")
    p.add_argument("--n-min", type=int, default=3)
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--protocol", type=int, choices=(1, 2), default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("noisy-keyrate", help="noisy key-rate grid via the relaxation")
    p.add_argument("--eps1", default="0:0.003:0.0005")
    p.add_argument("--eps2", default="0,0.0001")
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_noisy_keyrate)

    p = sub.add_parser("bias", help="guessing probability under biased settings")
    p.add_argument("--eps", default="0,0.03,0.06,0.09,0.12")
    p.add_argument(
        "--inequality", choices=("hardy", "holz", "parity-chsh"), default="hardy"
    )
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("robust", help="robust self-testing bounds")
    p.add_argument("--eps1", default="0:0.005:0.001")
    p.add_argument("--eps2", default="0")
    p.add_argument("--level", type=int, default=2)
    p.add_argument("--target", choices=("fidelity", "merit"), default="fidelity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_robust)

    p = sub.add_parser("simulate", help="Monte Carlo protocol run")
    p.add_argument("--config", help="ProtocolConfig JSON path")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--rounds", type=int, default=1_000_000)
    p.add_argument("--protocol", type=int, choices=(1, 2), default=1)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--eps1", type=float, default=0.0)
    p.add_argument("--eps2", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--transcript", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("entanglement", help="entanglement monotones table")
    p.add_argument("state", choices=("ghz", "hardy"))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--cut", default="0")
    p.add_argument("--order", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_entanglement)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (hardy.HardyError, qstate.QStateError, protosim.ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (npa.NpaError, keyrate.KeyrateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
