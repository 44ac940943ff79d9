"""Command-line interface.

    ifsmeasure build      --dist exp:1 --n 2 --out exp.json
    ifsmeasure simulate   --ifs builtin:triangular --steps 200000 --bins 100 --out traj.csv
    ifsmeasure backward   --dist exp:1 --n 2 --depth 64 --count 10000 --seed 7 --out samples.csv
    ifsmeasure verify     --ifs builtin:cantor --dist cantor --grid 729
    ifsmeasure staircase  --dist cantor --points 2187 --out staircase.csv
    ifsmeasure mixture-demo --steps 200000 --out mixture/

Exit codes: 0 pass/complete, 1 statistical test failed, 2 usage or
configuration error, 3 numeric integrity error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chain import (
    RngStream,
    backward_sample_batch,
    default_depth,
    draw_indices,
    parse_seed,
    simulate_forward,
)
from .distributions import ContinuousDistribution, Exponential, eval_cdf, parse_dist_spec
from .errors import ConstructionError, DomainError, IntegrityError, NumericError
from .ifs import (
    Ifsp,
    build_theorem_ifsp,
    cantor_ifsp,
    compose_ifsp,
    dumps_ifsp,
    invariance_residual,
    load_ifsp,
    triangular_ifsp,
)
from .stats import histogram, ks_test, one_step_stationarity, two_sample_test

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

BUILTIN_SYSTEMS = {
    "builtin:triangular": (triangular_ifsp, "triangular"),
    "builtin:cantor": (cantor_ifsp, "cantor"),
}

# Mixture demo: last states used for the two-sample comparisons.
MIXTURE_SAMPLES = 50_000
MIXTURE_KS_TOL = 0.02


@dataclass
class RunConfig:
    command: str
    dist_spec: str | None = None
    n: int | None = None
    seed: int | None = None
    steps: int | None = None
    depth: int | None = None
    count: int | None = None
    output_path: str | None = None
    alpha: float | None = None
    extra: dict = field(default_factory=dict)

    def items(self):
        base = {k: v for k, v in vars(self).items() if k != "extra"}
        base.update(self.extra)
        return sorted((k, v) for k, v in base.items() if v is not None)

    def header_lines(self) -> list[str]:
        return [f"# ifsmeasure {__version__} {self.command}"] + [f"# {k}={_fmt(v)}" for k, v in self.items()]

    def to_dict(self) -> dict:
        return {k: v for k, v in self.items()}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "w", newline=""), True


def write_csv(path: str | None, config: RunConfig, header: list[str], rows) -> None:
    fh, close = _open_out(path)
    try:
        for line in config.header_lines():
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def write_json(path: str | None, doc: dict, stream=None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        (stream or sys.stdout).write(text)
    else:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)


def _default_x0(ifsp: Ifsp) -> float:
    lo, _ = ifsp.support
    return lo if math.isfinite(lo) else 0.0


def resolve_system(args) -> tuple[Ifsp, ContinuousDistribution | None]:
    """The IFSp to run and the reference law for statistical checks."""
    dist = parse_dist_spec(args.dist) if args.dist else None
    if args.ifs:
        if args.ifs in BUILTIN_SYSTEMS:
            factory, ref = BUILTIN_SYSTEMS[args.ifs]
            ifsp = factory()
            return ifsp, dist or parse_dist_spec(ref)
        try:
            ifsp = load_ifsp(args.ifs)
        except FileNotFoundError:
            raise ConstructionError(f"IFSp file not found: {args.ifs}") from None
        return ifsp, dist or ifsp.dist
    if dist is None:
        raise ConstructionError("need --dist or --ifs")
    return build_theorem_ifsp(dist, args.n), dist


def _hist_range(args, ref, states) -> tuple[float, float]:
    lo, hi = args.lo, args.hi
    if ref is not None:
        if lo is None:
            lo = ref.support_lo if math.isfinite(ref.support_lo) else ref.quantile(0.001)
        if hi is None:
            hi = ref.support_hi if math.isfinite(ref.support_hi) else ref.quantile(0.999)
    if lo is None:
        lo = float(np.min(states))
    if hi is None:
        hi = float(np.max(states))
    if not hi > lo:
        hi = lo + 1.0
    return float(lo), float(hi)


def _hist_rows(h):
    return list(h.rows())


# --- commands --------------------------------------------------------------------


def cmd_build(args) -> int:
    dist = parse_dist_spec(args.dist)
    ifsp = build_theorem_ifsp(dist, args.n)
    text = dumps_ifsp(ifsp)
    if args.out and args.out != "-":
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    ifsp, ref = resolve_system(args)
    seed = parse_seed(args.seed)
    x0 = _default_x0(ifsp) if args.x0 is None else args.x0
    traj = simulate_forward(ifsp, x0, args.steps, RngStream(seed, args.stream))
    config = RunConfig(
        "simulate", dist_spec=args.dist, n=ifsp.n, seed=seed, steps=args.steps, output_path=args.out,
        alpha=args.alpha, extra={"ifs": args.ifs or ifsp.label, "x0": float(x0), "stream": args.stream},
    )
    rows = [(0, 0, traj.states[0])] + [
        (t + 1, int(i), traj.states[t + 1]) for t, i in enumerate(traj.indices.tolist())
    ]
    write_csv(args.out, config, ["step", "index", "state"], rows)

    samples = traj.states[1:] if traj.steps else traj.states
    lo, hi = _hist_range(args, ref, samples)
    hist_out = args.hist_out
    if hist_out is None and args.out and args.out != "-":
        hist_out = str(Path(args.out).with_suffix("")) + ".hist.csv"
    if hist_out:
        h = histogram(samples, lo, hi, args.bins)
        hconf = RunConfig(config.command, **{k: v for k, v in vars(config).items() if k != "command"})
        hconf.extra = dict(config.extra, bins=args.bins, lo=lo, hi=hi)
        write_csv(hist_out, hconf, ["bin_lo", "bin_hi", "count", "frequency"], _hist_rows(h))

    report = {"config": config.to_dict(), "steps": traj.steps, "clamped_steps": traj.clamped}
    status = EXIT_OK
    if ref is not None and traj.steps >= 1:
        ks = ks_test(samples, ref, args.alpha)
        report["ks"] = ks.to_dict()
        if args.ks_tol is not None:
            report["ks_tol"] = args.ks_tol
            report["ks_within_tol"] = ks.statistic <= args.ks_tol
            if ks.statistic > args.ks_tol:
                status = EXIT_FAILED
    to_stdout = args.out is None or args.out == "-"
    write_json(args.report, report, stream=sys.stderr if to_stdout else sys.stdout)
    return status


def cmd_backward(args) -> int:
    ifsp, ref = resolve_system(args)
    seed = parse_seed(args.seed)
    depth = args.depth if args.depth is not None else default_depth(ifsp.n)
    x0 = _default_x0(ifsp) if args.x0 is None else args.x0
    values = backward_sample_batch(ifsp, x0, depth, args.count, seed)
    config = RunConfig(
        "backward", dist_spec=args.dist, n=ifsp.n, seed=seed, depth=depth, count=args.count,
        output_path=args.out, alpha=args.alpha, extra={"ifs": args.ifs or ifsp.label, "x0": float(x0)},
    )
    write_csv(args.out, config, ["stream_index", "value"], enumerate(values.tolist()))
    report = {"config": config.to_dict(), "count": args.count}
    status = EXIT_OK
    if ref is not None and args.count >= 2:
        ks = ks_test(values, ref, args.alpha)
        report["ks"] = ks.to_dict()
        status = EXIT_OK if ks.passed else EXIT_FAILED
    to_stdout = args.out is None or args.out == "-"
    write_json(args.report, report, stream=sys.stderr if to_stdout else sys.stdout)
    return status


def residual_grid(dist: ContinuousDistribution, size: int) -> np.ndarray:
    """Cell midpoints on a bounded support (these avoid Cantor gap endpoints
    when size is a power of 3); quantile-stratified points otherwise."""
    lo, hi = dist.support_lo, dist.support_hi
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + (hi - lo) * (np.arange(size) + 0.5) / size
    return dist.quantile_array((np.arange(1, size + 1) - 0.5) / size)


def cmd_verify(args) -> int:
    ifsp, ref = resolve_system(args)
    if ref is None:
        raise ConstructionError("verify needs --dist for an IFSp that is not built from one distribution")
    grid = residual_grid(ref, args.grid)
    inv = invariance_residual(ifsp, ref, grid)
    one = one_step_stationarity(ifsp, ref, args.grid, args.alpha)
    ok = inv.max_residual <= args.tol and one.passed
    config = RunConfig(
        "verify", dist_spec=ref.spec, n=ifsp.n, alpha=args.alpha, output_path=args.out,
        extra={"ifs": args.ifs or ifsp.label, "grid": args.grid, "tol": args.tol},
    )
    summary = {
        "config": config.to_dict(),
        "invariance": {"max_residual": inv.max_residual, "grid_size": len(inv.grid), "tol": args.tol},
        "one_step": one.to_dict(),
        "pass": ok,
    }
    write_json(None, summary)
    if args.out:
        write_json(args.out, dict(summary, invariance=dict(summary["invariance"], **inv.to_dict())))
    return EXIT_OK if ok else EXIT_FAILED


def cmd_staircase(args) -> int:
    dist = parse_dist_spec(args.dist)
    if args.points < 2:
        raise DomainError("--points must be >= 2")
    lo = args.lo if args.lo is not None else (dist.support_lo if math.isfinite(dist.support_lo) else dist.quantile(0.001))
    hi = args.hi if args.hi is not None else (dist.support_hi if math.isfinite(dist.support_hi) else dist.quantile(0.999))
    if not hi > lo:
        raise DomainError(f"empty range [{lo!r}, {hi!r}]")
    m = args.points - 1
    xs = [lo + (hi - lo) * j / m for j in range(args.points)]
    config = RunConfig("staircase", dist_spec=dist.spec, output_path=args.out, extra={"points": args.points, "lo": lo, "hi": hi})
    write_csv(args.out, config, ["x", "F"], ((x, eval_cdf(dist, x)) for x in xs))
    return EXIT_OK


def mixture_systems() -> dict[str, Ifsp]:
    """The two exponential systems (means 1 and 2) and their composed g- and h-systems."""
    f1 = build_theorem_ifsp(Exponential(1.0), 2)
    f2 = build_theorem_ifsp(Exponential(0.5), 2)
    return {"mu1": f1, "mu2": f2, "g": compose_ifsp(f2, f1), "h": compose_ifsp(f1, f2)}


def push_one_step(ifsp: Ifsp, values: np.ndarray, rng: RngStream) -> np.ndarray:
    """Apply one randomly chosen map of ``ifsp`` to every value."""
    idx = draw_indices(rng, ifsp.probs, values.size)
    out = np.empty_like(values)
    for i in range(1, ifsp.n + 1):
        sel = idx == i
        out[sel] = ifsp.maps[i - 1].apply_array(values[sel])
    return out


def run_mixture_demo(seed: int, steps: int, bins: int, hi: float, alpha: float = 0.01) -> dict:
    systems = mixture_systems()
    chains = {}
    for stream, name in enumerate(("mu1", "mu2", "g", "h")):
        chains[name] = simulate_forward(systems[name], 0.0, steps, RngStream(seed, stream)).states[1:]
    tail = {k: v[-min(MIXTURE_SAMPLES, v.size):] for k, v in chains.items()}
    result = {"chains": chains, "histograms": {k: histogram(v, 0.0, hi, bins) for k, v in chains.items()}}
    upper = {
        "mu1": ks_test(chains["mu1"], Exponential(1.0), alpha),
        "mu2": ks_test(chains["mu2"], Exponential(0.5), alpha),
    }
    self_tests = {
        name: two_sample_test(tail[name], push_one_step(systems[name], tail[name], RngStream(seed, stream)), alpha)
        for stream, name in ((4, "g"), (5, "h"))
    }
    g_vs_h = two_sample_test(tail["g"], tail["h"], alpha)
    result["report"] = {
        "upper_ks": {k: dict(v.to_dict(), tol=MIXTURE_KS_TOL, within_tol=v.statistic <= MIXTURE_KS_TOL) for k, v in upper.items()},
        "self_test": {k: v.to_dict() for k, v in self_tests.items()},
        "g_vs_h": dict(g_vs_h.to_dict(), differ=not g_vs_h.passed),
    }
    result["ok"] = (
        all(v.statistic <= MIXTURE_KS_TOL for v in upper.values())
        and all(v.passed for v in self_tests.values())
        and not g_vs_h.passed
    )
    return result


def cmd_mixture_demo(args) -> int:
    seed = parse_seed(args.seed)
    res = run_mixture_demo(seed, args.steps, args.bins, args.hi, args.alpha)
    out = Path(args.out)
    config = RunConfig("mixture-demo", seed=seed, steps=args.steps, alpha=args.alpha, output_path=str(out),
                       extra={"bins": args.bins, "hi": args.hi})
    names = {"mu1": "upper_mean1", "mu2": "upper_mean2", "g": "lower_g", "h": "lower_h"}
    for key, stem in names.items():
        write_csv(out / f"{stem}.hist.csv", config, ["bin_lo", "bin_hi", "count", "frequency"],
                  _hist_rows(res["histograms"][key]))
    doc = {"config": config.to_dict(), **res["report"], "pass": res["ok"]}
    write_json(out / "report.json", doc)
    write_json(None, doc)
    return EXIT_OK if res["ok"] else EXIT_FAILED


# --- argument parsing ------------------------------------------------------------


def _seed_arg(text: str) -> int:
    try:
        return parse_seed(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _system_flags(p, n_default=2):
    p.add_argument("--dist", help="distribution specifier: uniform, exp:<rate>, triangular, cantor, tabulated:<csv>, empirical:<csv>")
    p.add_argument("--ifs", help="IFSp JSON path, or builtin:triangular / builtin:cantor")
    p.add_argument("--n", type=int, default=n_default, help="number of maps for the theorem construction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifsmeasure", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write the theorem IFSp of a distribution as JSON")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("simulate", help="forward chain trajectory + histogram")
    _system_flags(p)
    p.add_argument("--x0", type=float)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=_seed_arg, default=0)
    p.add_argument("--stream", type=_seed_arg, default=0)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--ks-tol", type=float, help="exit 1 if the KS statistic vs the reference law exceeds this")
    p.add_argument("--out", help="trajectory CSV (default stdout)")
    p.add_argument("--hist-out", help="histogram CSV (default <out>.hist.csv)")
    p.add_argument("--report", help="JSON report path (default stdout, or stderr when CSV goes to stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backward", help="independent samples from reversed iterates + KS test")
    _system_flags(p)
    p.add_argument("--x0", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--seed", type=_seed_arg, default=0)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", help="samples CSV (default stdout)")
    p.add_argument("--report", help="KS report JSON path")
    p.set_defaults(func=cmd_backward)

    p = sub.add_parser("verify", help="invariance residual + one-step stationarity")
    _system_flags(p)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", help="full report JSON with per-point residuals")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("staircase", help="tabulate (x, F(x)) on an even grid")
    p.add_argument("--dist", required=True)
    p.add_argument("--points", type=int, default=2187)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_staircase)

    p = sub.add_parser("mixture-demo", help="exponential systems and their composed 1-variable mixtures")
    p.add_argument("--seed", type=_seed_arg, default=0)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--hi", type=float, default=12.0, help="upper edge of the histogram range [0, hi]")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", default="mixture-demo")
    p.set_defaults(func=cmd_mixture_demo)
    return parser


def _validate(args) -> None:
    for name in ("n", "steps", "count", "depth", "bins", "grid", "points"):
        v = getattr(args, name, None)
        if v is None:
            continue
        floor = {"n": 2, "steps": 0, "count": 1, "depth": 1, "bins": 1, "grid": 2, "points": 2}[name]
        if v < floor:
            raise DomainError(f"--{name} must be >= {floor}, got {v}")
    alpha = getattr(args, "alpha", None)
    if alpha is not None and not 0.0 < alpha < 1.0:
        raise DomainError(f"--alpha must lie in (0, 1), got {alpha}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except (ConstructionError, DomainError, FileNotFoundError) as exc:
        print(f"ifsmeasure: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, IntegrityError) as exc:
        print(f"ifsmeasure: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
