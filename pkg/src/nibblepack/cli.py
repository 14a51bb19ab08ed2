"""Command-line front end: ``nibblepack gen|pack|code|nibble|analyze``.

Exit codes: 0 success, 1 bad configuration, 2 infeasible parameters, 3 retry
budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import concentration_tail, greedy_mis
from .errors import (
    CapacityError,
    InternalExhaustion,
    NibblepackError,
    PreconditionViolated,
    RetriesExhausted,
    ScheduleInfeasible,
    SizeCapExceeded,
)
from .geometry import (
    ball_volume,
    ball_volume_sandwich,
    cap_area,
    lens_upper_bound,
    lens_volume,
    unit_ball_radius,
)
from .graphcore import (
    CayleyGraph,
    GenerationFailed,
    Graph,
    build_geometric_graph,
    complete_graph,
    cycle_graph,
    gnp,
    random_regular,
    random_regular_capped,
    sharpness_construction,
)
from .nibble import NibbleParams, Schedule, result_json, run_schedule, verify_independent
from .pointproc import (
    Domain,
    PointCloud,
    PruneSpec,
    paper_euclidean_preset,
    paper_spherical_preset,
    prune,
    sample_poisson,
    write_cloud,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_RETRIES = 0, 1, 2, 3
VERSION = f"nibblepack {__version__}"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# -- argument parsing -------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key-value file (JSON object or 'key = value' lines)")
    p.add_argument("--seed", type=int, help="RNG seed (drawn and recorded when omitted)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, help="worker cap (falls back to NIBBLEPACK_THREADS)")
    p.add_argument("--timing", action="store_true", help="write wall times into the trace")


def _schedule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("paper", "custom"), default="custom")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--max-retries", type=int, default=64)
    p.add_argument("--auto-blowup", action="store_true")


def _sampling_flags(p: argparse.ArgumentParser, sphere: bool) -> None:
    p.add_argument("--dim", type=int, required=False, default=None)
    if not sphere:
        p.add_argument("--domain", default="box:20", help="box:L, ball:R")
        p.add_argument("--radius", type=float, help="ball radius r (default: unit-volume radius)")
    else:
        p.add_argument("--theta", type=float, help="minimum angle in radians")
    p.add_argument("--intensity", type=float)
    p.add_argument("--degree-cap", type=float)
    p.add_argument("--codegree-cap", type=float)
    p.add_argument("--max-points", type=int, default=2_000_000)
    p.add_argument("--emit-graph", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nibblepack", description="Packings, spherical codes and independent sets by nibbling.")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a graph or a Poisson point cloud")
    _common(g)
    g.add_argument("--kind", required=False, default=None,
                   choices=("regular", "capped", "sharpness", "gnp", "cycle", "complete", "empty", "poisson"))
    g.add_argument("--n", type=int)
    g.add_argument("--degree", type=int)
    g.add_argument("--eta", type=float)
    g.add_argument("--cap", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--dim", type=int)
    g.add_argument("--domain", default="box:10")
    g.add_argument("--intensity", type=float)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--name", help="output file name")

    pk = sub.add_parser("pack", help="sphere packing in a box or ball")
    _common(pk)
    _sampling_flags(pk, sphere=False)
    _schedule_flags(pk)

    cd = sub.add_parser("code", help="spherical code on S^{d-1}")
    _common(cd)
    _sampling_flags(cd, sphere=True)
    _schedule_flags(cd)

    nb = sub.add_parser("nibble", help="independent set of a graph file")
    _common(nb)
    nb.add_argument("graph", nargs="?", help="graph file (JSON or binary)")
    _schedule_flags(nb)

    an = sub.add_parser("analyze", help="tables and empirical checks")
    _common(an)
    an.add_argument("what", choices=("geometry", "graph", "tails"))
    an.add_argument("--graph", dest="graph_file")
    an.add_argument("--dmin", type=int, default=4)
    an.add_argument("--dmax", type=int, default=64)
    an.add_argument("--gamma", type=float, default=0.5)
    an.add_argument("--alpha", type=float, default=0.5)
    an.add_argument("--delta", type=int, default=1024)
    an.add_argument("--trials", type=int, default=100_000)
    return parser


def _read_config(path: str) -> dict:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        obj = json.loads(text)
        if any(isinstance(v, (dict, list)) for v in obj.values()):
            raise ConfigError("config must be flat")
        return obj
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                k, v = line.split(sep, 1)
                out[k.strip()] = v.strip()
                break
        else:
            raise ConfigError(f"cannot parse config line {raw!r}")
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse, then re-parse with config-file values as defaults so flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = _read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ConfigError(f"unknown config key {key!r}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
        elif act.type is not None and value is not None:
            value = act.type(value)
        if act.choices is not None and value not in act.choices:
            raise ConfigError(f"invalid value {value!r} for {key}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("NIBBLEPACK_THREADS")
        n = int(env) if env else 1
    if n < 1:
        raise ConfigError("threads must be >= 1")
    # the compiled kernels are sequential, so the cap never changes results
    return n


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 63))
    if args.seed < 0:
        raise ConfigError("seed must be non-negative")
    return args.seed


# -- outputs ---------------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj) + "\n")


def _schedule_params(args) -> dict:
    return {
        "mode": args.mode,
        "gamma": args.gamma,
        "alpha": args.alpha,
        "rounds": args.rounds,
        "max_retries": args.max_retries,
        "auto_blowup": bool(args.auto_blowup),
    }


def _make_schedule(args, G: Graph) -> Schedule:
    delta, delta2 = G.max_degree(), G.max_codegree()
    if args.mode == "paper":
        return Schedule.paper(delta, delta2)
    return Schedule.custom(delta, delta2, args.gamma, args.alpha, args.rounds)


def _run_nibble(args, G: Graph, rng: np.random.Generator):
    sched = _make_schedule(args, G)
    params = NibbleParams(sched.gamma, min(sched.alpha, sched.gamma), args.max_retries, mode=args.mode, seed=args.seed)
    return run_schedule(G, params, sched, rng, auto_blowup=args.auto_blowup)


# -- subcommands ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind
    if kind is None:
        raise ConfigError("gen needs --kind")
    if kind == "poisson":
        if args.dim is None or args.intensity is None:
            raise ConfigError("poisson needs --dim and --intensity")
        cloud = sample_poisson(Domain.parse(args.domain, args.dim), args.intensity, rng)
        cloud.seed = seed
        path = out / (args.name or "cloud.json")
        write_cloud(cloud, path, {"version": VERSION, "intensity": args.intensity})
        print(f"{len(cloud)} points -> {path}")
        return EXIT_OK

    def need(*names):
        for nm in names:
            if getattr(args, nm) is None:
                raise ConfigError(f"{kind} needs --{nm}")

    if kind == "regular":
        need("n", "degree")
        G = random_regular(args.n, args.degree, rng)
    elif kind == "capped":
        need("n", "degree", "cap")
        G = random_regular_capped(args.n, args.degree, args.cap, rng)
    elif kind == "sharpness":
        need("n", "degree", "eta")
        G = sharpness_construction(args.n, args.degree, args.eta, rng)
    elif kind == "gnp":
        need("n", "p")
        G = gnp(args.n, args.p, rng)
    elif kind == "cycle":
        need("n")
        G = cycle_graph(args.n)
    elif kind == "complete":
        need("n")
        G = complete_graph(args.n)
    else:
        need("n")
        G = Graph.empty(args.n)
    path = out / (args.name or ("graph.bin" if args.binary else "graph.json"))
    G.write(path, binary=args.binary)
    prof = G.profile()
    print(f"n={G.n} m={G.num_edges} max_degree={prof.max_degree} max_codegree={prof.max_codegree} -> {path}")
    return EXIT_OK


def _sample_and_prune(args, domain: Domain, interaction: float, rng, paper_intensity=None, paper_spec=None):
    intensity = args.intensity if args.intensity is not None else paper_intensity
    if intensity is None:
        raise ConfigError("--intensity is required in custom mode")
    base = paper_spec if (paper_spec is not None and args.intensity is None) else PruneSpec.for_intensity(
        domain, intensity, interaction)
    spec = PruneSpec(
        interaction,
        args.degree_cap if args.degree_cap is not None else base.degree_cap,
        args.codegree_cap if args.codegree_cap is not None else base.codegree_cap,
    )
    cloud = sample_poisson(domain, intensity, rng, args.max_points)
    cloud.seed = args.seed
    G_full = build_geometric_graph(cloud, interaction)
    kept, bad_deg, bad_codeg = prune(cloud, spec, G_full)
    G = G_full.induced_subgraph(kept.meta["index"])
    G = Graph(G.indptr, G.indices)
    stats = {
        "intensity": intensity,
        "sampled": len(cloud),
        "removed_degree": bad_deg,
        "removed_codegree": bad_codeg,
        "kept": len(kept),
        "degree_cap": spec.degree_cap,
        "codegree_cap": spec.codegree_cap,
        "max_degree": G.max_degree(),
        "max_codegree": G.max_codegree(),
    }
    return kept, G, stats


def _finish(args, out: Path, name: str, centres: PointCloud, G: Graph, I, trace, summary: dict) -> None:
    params = dict(summary.pop("params"))
    res = result_json(I, True, args.seed, params)
    res.update(summary)
    _write_json(out / "result.json", res)
    (out / "trace.csv").write_text(trace.to_csv(args.timing))
    write_cloud(centres, out / f"{name}.json", {"version": VERSION})
    if args.emit_graph:
        G.write(out / "graph.json")


def _paper_check(d: int, delta: float) -> None:
    """Fail fast when the paper-mode schedule cannot run at the preset degree."""
    Schedule.paper(int(min(delta, 2 ** 62)), 0)


def cmd_pack(args) -> int:
    seed = _seed(args)
    if args.dim is None:
        raise ConfigError("pack needs --dim")
    d = args.dim
    domain = Domain.parse(args.domain, d)
    if not domain.euclidean:
        raise ConfigError("pack works on box or ball domains; use 'code' for the sphere")
    r = args.radius if args.radius is not None else unit_ball_radius(d)
    paper_intensity = paper_spec = None
    if args.mode == "paper":
        paper_intensity, paper_spec = paper_euclidean_preset(d)
        _paper_check(d, (math.sqrt(d) / (4.0 * math.log(d))) ** d)
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kept, G, stats = _sample_and_prune(args, domain, 2.0 * r, rng, paper_intensity, paper_spec)
    I, trace = _run_nibble(args, G, rng)
    centres = kept.subset(I)
    check = build_geometric_graph(centres, 2.0 * r)
    if check.num_edges:
        raise AssertionError("packing has overlapping balls")
    ball = ball_volume(d, r)
    density = len(I) * ball / domain.measure()
    greedy = greedy_mis(G, "random", np.random.default_rng(seed))
    summary = {
        "params": {"dim": d, "domain": args.domain, "radius": r, **_schedule_params(args)},
        "pipeline": stats,
        "min_distance": centres.min_pairwise() if len(centres) <= 20000 else None,
        "density": density,
        "greedy_size": int(len(greedy)),
        "greedy_density": len(greedy) * ball / domain.measure(),
        "trace": trace.to_json()["meta"],
    }
    _finish(args, out, "packing", centres, G, I, trace, summary)
    print(f"packing: {len(I)} balls of radius {r:.6g}, density {density:.6g} (greedy {summary['greedy_density']:.6g})")
    return EXIT_OK


def cmd_code(args) -> int:
    seed = _seed(args)
    if args.dim is None or args.theta is None:
        raise ConfigError("code needs --dim and --theta")
    d, theta = args.dim, args.theta
    if d < 2 or not 0 < theta < math.pi + 1e-12:
        raise ConfigError("code needs dim >= 2 and 0 < theta <= pi")
    domain = Domain.sphere(d)
    paper_intensity = paper_spec = None
    if args.mode == "paper":
        paper_intensity, paper_spec = paper_spherical_preset(d, theta)
        _paper_check(d, cap_area(d, theta) * paper_intensity)
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kept, G, stats = _sample_and_prune(args, domain, theta, rng, paper_intensity, paper_spec)
    I, trace = _run_nibble(args, G, rng)
    code = kept.subset(I)
    if build_geometric_graph(code, theta).num_edges:
        raise AssertionError("code has a pair closer than theta")
    min_angle = code.min_pairwise()
    summary = {
        "params": {"dim": d, "theta": theta, **_schedule_params(args)},
        "pipeline": stats,
        "min_angle": min_angle if math.isfinite(min_angle) else None,
        "saturation_ratio": len(I) * cap_area(d, theta),
        "trace": trace.to_json()["meta"],
    }
    _finish(args, out, "code", code, G, I, trace, summary)
    print(f"code: {len(I)} points on S^{d - 1}, min angle {min_angle:.6g}, |I| s_d(theta) = {summary['saturation_ratio']:.6g}")
    return EXIT_OK


def cmd_nibble(args) -> int:
    seed = _seed(args)
    if not args.graph:
        raise ConfigError("nibble needs a graph file")
    G = Graph.read(args.graph)
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    I, trace = _run_nibble(args, G, rng)
    res = result_json(I, verify_independent(G, I), seed, {"graph": str(args.graph), **_schedule_params(args)})
    res["trace"] = trace.to_json()["meta"]
    _write_json(out / "result.json", res)
    (out / "trace.csv").write_text(trace.to_csv(args.timing))
    print(f"independent set of size {len(I)} on n={G.n}")
    return EXIT_OK


def geometry_table(dmin: int, dmax: int) -> str:
    """CSV of the ball-volume sandwich, the unit radius bound and the lens bound for each dimension."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "t", "volume", "lower", "upper", "sandwich_ok", "r_d", "sqrt_d_over_8",
                "radius_ok", "lens_at_t", "lens_bound", "lens_ok"])
    for d in range(dmin, dmax + 1):
        rd = unit_ball_radius(d)
        for t in (0.5, 1.0, 2.0, 3.0):
            vol = ball_volume(d, t)
            lo, hi = ball_volume_sandwich(d, t)
            lens = lens_volume(d, 2.0 * rd, t)
            lb = lens_upper_bound(d, t)
            w.writerow([d, t, f"{vol:.12g}", f"{lo:.12g}", f"{hi:.12g}", int(lo <= vol <= hi),
                        f"{rd:.12g}", f"{math.sqrt(d / 8):.12g}", int(rd <= math.sqrt(d / 8)),
                        f"{lens:.12g}", f"{lb:.12g}", int(lens <= lb)])
    return buf.getvalue()


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "geometry":
        if args.dmin < 4 or args.dmax < args.dmin:
            raise ConfigError("need 4 <= dmin <= dmax")
        text = geometry_table(args.dmin, args.dmax)
        (out / "geometry.csv").write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    if args.what == "graph":
        if not args.graph_file:
            raise ConfigError("analyze graph needs --graph")
        G = Graph.read(args.graph_file)
        prof = G.profile()
        obj = {"n": G.n, "edges": G.num_edges, "max_degree": prof.max_degree,
               "max_codegree": prof.max_codegree,
               "histogram": {str(k): v for k, v in prof.histogram.items()}, "version": VERSION}
        _write_json(out / "profile.json", obj)
        print(json.dumps(obj))
        return EXIT_OK
    if args.delta % 2:
        raise ConfigError("tails use an even-degree Cayley graph; --delta must be even")
    m = 4 * args.delta ** 2 + 1
    H = CayleyGraph.random(m, args.delta, rng)
    deg, codeg = concentration_tail(H, args.gamma, args.alpha, args.trials, rng)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "gamma", "alpha", "eta", "delta", "trials", "exceedance", "stderr", "bound",
                "respected", "mean", "mean_bound"])
    for r in (deg, codeg):
        w.writerow([r.kind, r.gamma, r.alpha, r.eta, r.delta, r.trials, f"{r.exceedance:.6g}",
                    f"{r.stderr:.3g}", f"{r.bound:.6g}", int(r.respected), f"{r.mean:.6g}", f"{r.mean_bound:.6g}"])
    (out / "tails.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "pack": cmd_pack, "code": cmd_code, "nibble": cmd_nibble, "analyze": cmd_analyze}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        if not args.command:
            parser.print_help()
            return EXIT_CONFIG
        _threads(args)
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScheduleInfeasible, PreconditionViolated, SizeCapExceeded, CapacityError, InternalExhaustion) as exc:
        print(f"infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RetriesExhausted, GenerationFailed) as exc:
        print(f"retries exhausted: {exc}", file=sys.stderr)
        return EXIT_RETRIES
    except NibblepackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
