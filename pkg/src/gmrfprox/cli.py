"""Command-line entry point: ``gmrfprox {synth,race,prox-bench}``.

Every command reads a YAML run configuration (``--config``) whose values can
be overridden by individual flags, e.g.::

    gmrfprox synth --config run.yaml --seed 3 --out runs/s3
    gmrfprox race --input runs/s3 --solvers admm,fista
    gmrfprox prox-bench --sizes 128x128,256x256,512x512
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import statistics
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from .data import (
    default_priors,
    make_basis,
    make_synthetic_instance,
    read_matrix_csv,
    write_band_image,
    write_matrix_csv,
    write_trace_csv,
)
from .exceptions import ParseError
from .gmrf import GmrfPrior
from .metrics import REFERENCE_MAX_ITERS, REFERENCE_TOL, nmse, reference_solution
from .optimizers import SOLVERS, BoxConstraint, SolverConfig, suggest_admm_gamma
from .prox import ProxProblem, build_cache, prox_solve
from .spectral import GridShape

log = logging.getLogger("gmrfprox")

SOLVER_NAMES = ("admm", "fb", "fista")

DEFAULT_CONFIG = {
    "grid": {"rows": 64, "cols": 64},
    "d": 3,
    "m": 5,
    "snr_db": 25.0,
    "seed": 0,
    "lambda": 0.05,
    "priors": None,
    "box": {"lo": 0.0, "hi": 1.0},
    "solvers": ["admm", "fista", "fb"],
    "solver": {
        "admm": {"gamma": 1.0, "max_iters": 20000, "tol": 1e-10, "record_every": 1},
        "fb": {"max_iters": 50000, "tol": 1e-10, "record_every": 1},
        "fista": {"max_iters": 50000, "tol": 1e-10, "record_every": 1},
    },
    "reference": {"gamma": "auto", "tol": REFERENCE_TOL, "max_iters": REFERENCE_MAX_ITERS},
    "race": {"target_rel_err": 1e-4, "stop_at_target": False, "baseline": True},
    "bench": {"sizes": [[128, 128], [256, 256], [512, 512]], "repeats": 5, "gamma": 1.0},
    "output_dir": "gmrfprox-out",
}


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    """Fully resolved run configuration."""

    shape: GridShape
    d: int
    m: int
    snr_db: float
    seed: int
    priors: list[GmrfPrior]
    box: BoxConstraint
    solvers: list[str]
    solver_configs: dict[str, SolverConfig]
    reference: dict
    race: dict
    bench: dict
    output_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        cfg = _merge(DEFAULT_CONFIG, values or {})
        unknown = set(cfg) - set(DEFAULT_CONFIG)
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}")
        shape = GridShape(cfg["grid"]["rows"], cfg["grid"]["cols"])
        d, m = int(cfg["d"]), int(cfg["m"])
        if d < 1 or m < 1:
            raise ParseError(f"d and m must be positive, got d={d}, m={m}")
        if cfg["priors"] is None:
            priors = default_priors(d, float(cfg["lambda"]))
        else:
            priors = [GmrfPrior.from_dict(block) for block in cfg["priors"]]
            if len(priors) != d:
                raise ParseError(f"{len(priors)} prior blocks for d={d}")
        solvers = list(cfg["solvers"])
        bad = [s for s in solvers if s not in SOLVER_NAMES]
        if bad:
            raise ParseError(f"unknown solvers {bad}; choose from {list(SOLVER_NAMES)}")
        solver_configs = {
            name: SolverConfig.from_dict(cfg["solver"].get(name, {})) for name in SOLVER_NAMES
        }
        cfg["priors"] = [p.to_dict() for p in priors]
        return cls(
            shape=shape,
            d=d,
            m=m,
            snr_db=float(cfg["snr_db"]),
            seed=int(cfg["seed"]),
            priors=priors,
            box=BoxConstraint(float(cfg["box"]["lo"]), float(cfg["box"]["hi"])),
            solvers=solvers,
            solver_configs=solver_configs,
            reference=cfg["reference"],
            race=cfg["race"],
            bench=cfg["bench"],
            output_dir=str(cfg["output_dir"]),
            raw=cfg,
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(values, dict):
            raise ParseError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(_merge(values, overrides or {}))


def _overrides(args) -> dict:
    out: dict = {}
    if getattr(args, "rows", None) is not None or getattr(args, "cols", None) is not None:
        out["grid"] = {}
        if args.rows is not None:
            out["grid"]["rows"] = args.rows
        if args.cols is not None:
            out["grid"]["cols"] = args.cols
    for key in ("d", "m", "snr_db", "seed", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if getattr(args, "lam", None) is not None:
        out["lambda"] = args.lam
    if getattr(args, "solvers", None):
        out["solvers"] = [s.strip() for s in args.solvers.split(",") if s.strip()]
    per_solver = {}
    for key in ("max_iters", "tol", "record_every"):
        value = getattr(args, key, None)
        if value is not None:
            per_solver[key] = value
    if per_solver or getattr(args, "gamma", None) is not None:
        out["solver"] = {name: dict(per_solver) for name in SOLVER_NAMES}
        if getattr(args, "gamma", None) is not None:
            out["solver"]["admm"]["gamma"] = args.gamma
    if getattr(args, "sizes", None):
        out.setdefault("bench", {})["sizes"] = _parse_sizes(args.sizes)
    if getattr(args, "repeats", None) is not None:
        out.setdefault("bench", {})["repeats"] = args.repeats
    return out


def _parse_sizes(text: str) -> list[list[int]]:
    sizes = []
    for item in text.split(","):
        try:
            rows, cols = (int(v) for v in item.lower().split("x"))
        except ValueError:
            raise ParseError(f"size {item!r} is not of the form ROWSxCOLS") from None
        sizes.append([rows, cols])
    return sizes


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path!r} is not writable")
    return path


def _write_manifest(path: str, values: dict) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(values, fh, sort_keys=True)


# ----------------------------------------------------------------- commands


def cmd_synth(config: RunConfig) -> dict:
    """Generate a synthetic instance and write it to ``config.output_dir``."""
    out = _ensure_dir(config.output_dir)
    inst = make_synthetic_instance(config.d, config.m, config.shape, config.priors, config.snr_db, config.seed)
    paths = {
        "W": os.path.join(out, "W.csv"),
        "H_true": os.path.join(out, "H_true.csv"),
        "Y": os.path.join(out, "Y.csv"),
    }
    write_matrix_csv(paths["W"], inst.W)
    write_matrix_csv(paths["H_true"], inst.H_true)
    write_matrix_csv(paths["Y"], inst.Y)
    for i in range(inst.d):
        path = os.path.join(out, f"H_true_band{i + 1}.pgm")
        write_band_image(path, inst.H_true[i], inst.shape)
        paths[f"band{i + 1}"] = path
    paths["manifest"] = os.path.join(out, "manifest.yaml")
    # the destination is not an instance parameter; leaving it out keeps
    # repeated runs byte-identical wherever they are written
    manifest = config.to_dict()
    manifest.pop("output_dir")
    _write_manifest(paths["manifest"], manifest)
    log.info("wrote instance (seed %d, %dx%d) to %s", config.seed, config.shape.rows, config.shape.cols, out)
    return paths


def _load_instance(input_dir: str, config: RunConfig):
    W = read_matrix_csv(os.path.join(input_dir, "W.csv"))
    Y = read_matrix_csv(os.path.join(input_dir, "Y.csv"))
    H_true = read_matrix_csv(os.path.join(input_dir, "H_true.csv"))
    manifest = os.path.join(input_dir, "manifest.yaml")
    if os.path.exists(manifest):
        stored = load_config(manifest)
        config.shape, config.priors = stored.shape, stored.priors
        config.raw["grid"] = stored.raw["grid"]
        config.raw["priors"] = stored.raw["priors"]
    if Y.shape[1] != config.shape.n or W.shape[1] != len(config.priors):
        raise ParseError(f"instance in {input_dir} does not match grid/priors of the config")
    return W, Y, H_true


def _reference_gamma(setting, W) -> float:
    return suggest_admm_gamma(W) if setting in (None, "auto") else float(setting)


def cmd_race(config: RunConfig, input_dir: str | None = None, synth: bool = False) -> dict:
    """Run every selected solver from zero and write traces plus a summary."""
    out = _ensure_dir(config.output_dir)
    if synth:
        inst = make_synthetic_instance(config.d, config.m, config.shape, config.priors, config.snr_db, config.seed)
        W, Y, H_true = inst.W, inst.Y, inst.H_true
    elif input_dir is not None:
        W, Y, H_true = _load_instance(input_dir, config)
    else:
        raise FileNotFoundError("race needs --input DIR with W.csv, Y.csv, H_true.csv, or --synth")

    shape, priors, box = config.shape, config.priors, config.box
    cache = build_cache(W, priors, shape)
    ref_cfg = config.reference
    t0 = time.perf_counter()
    reference = reference_solution(
        Y, W, priors, shape, box,
        gamma=_reference_gamma(ref_cfg.get("gamma"), W),
        tol=float(ref_cfg.get("tol", REFERENCE_TOL)),
        max_iters=int(ref_cfg.get("max_iters", REFERENCE_MAX_ITERS)),
        cache=cache,
    )
    log.info("reference: %d ADMM iterations in %.2fs", reference.iters, time.perf_counter() - t0)
    write_matrix_csv(os.path.join(out, "H_star.csv"), reference.H_star)

    target = float(config.race.get("target_rel_err", 1e-4))
    stop = bool(config.race.get("stop_at_target", False))
    rows, paths = [], {}
    results = {}
    for name in config.solvers:
        solver_cfg = config.solver_configs[name]
        if stop:
            solver_cfg = SolverConfig(**{**solver_cfg.to_dict(), "target_rel_err": target})
        H, trace = SOLVERS[name](
            Y, W, priors, shape, box, solver_cfg,
            H_true=H_true, reference=reference.H_star, cache=cache,
        )
        results[name] = (H, trace)
        paths[name] = os.path.join(out, f"trace_{name}.csv")
        write_trace_csv(paths[name], trace)
        last = trace[-1]
        rows.append([name, last.iter, last.objective, last.nmse, trace.time_to_rel_err(target)])
        log.info("%s: %d iterations, objective %.12g, NMSE %.4g", name, last.iter, last.objective, last.nmse)

    if config.race.get("baseline", True):
        flat = [p.with_lambda(0.0) for p in priors]
        H, trace = SOLVERS["admm"](
            Y, W, flat, shape, box, config.solver_configs["admm"], H_true=H_true
        )
        results["baseline"] = (H, trace)
        paths["baseline"] = os.path.join(out, "trace_baseline.csv")
        write_trace_csv(paths["baseline"], trace)
        rows.append(["baseline", trace[-1].iter, trace[-1].objective, nmse(H, H_true), math.inf])

    for name, (H, _) in results.items():
        for i in range(H.shape[0]):
            write_band_image(os.path.join(out, f"estimate_{name}_band{i + 1}.pgm"), H[i], shape)

    summary = os.path.join(out, "summary.csv")
    with open(summary, "w") as fh:
        fh.write(f"solver,iters,final_objective,final_nmse,seconds_to_rel_err_{target:g}\n")
        for name, iters, obj, err, secs in rows:
            fh.write(f"{name},{iters},{obj!r},{err!r},{secs!r}\n")
    paths["summary"] = summary
    _write_manifest(os.path.join(out, "race_manifest.yaml"), config.to_dict())
    print(f"{'solver':<10}{'iters':>8}{'objective':>22}{'NMSE':>12}{'t(rel_err<=%g)' % target:>20}")
    for name, iters, obj, err, secs in rows:
        print(f"{name:<10}{iters:>8}{obj:>22.12g}{err:>12.5f}{secs:>20.4f}")
    return {"paths": paths, "results": results, "reference": reference, "rows": rows}


def time_prox_sizes(W, priors, shapes, gamma: float, repeats: int, seed: int = 0) -> list[tuple[float, float]]:
    """Median ``prox_solve`` time and cache build time for each grid shape.

    Sizes are timed round-robin (one call per size per round) so that slow
    phases of a shared machine hit every size alike.
    """
    rng = np.random.default_rng(seed)
    setups, cache_seconds = [], []
    for shape in shapes:
        shape = GridShape.coerce(shape)
        Y = rng.standard_normal((W.shape[0], shape.n))
        Hbar = rng.uniform(size=(W.shape[1], shape.n))
        t0 = time.perf_counter()
        cache = build_cache(W, priors, shape)
        cache.factor(gamma)
        cache_seconds.append(time.perf_counter() - t0)
        problem = ProxProblem(Y, W, priors, shape, gamma, Hbar)
        prox_solve(problem, cache)  # warm-up
        setups.append((problem, cache))
    times = [[] for _ in setups]
    for _ in range(repeats):
        for i, (problem, cache) in enumerate(setups):
            t0 = time.perf_counter()
            prox_solve(problem, cache)
            times[i].append(time.perf_counter() - t0)
    return [(statistics.median(t), c) for t, c in zip(times, cache_seconds)]


def time_prox(W, priors, shape, gamma: float, repeats: int, seed: int = 0) -> tuple[float, float]:
    """Median ``prox_solve`` time over ``repeats`` runs, and the cache build time."""
    return time_prox_sizes(W, priors, [shape], gamma, repeats, seed)[0]


def cmd_prox_bench(config: RunConfig) -> dict:
    """Time the closed-form prox at each configured grid size."""
    out = _ensure_dir(config.output_dir)
    repeats = int(config.bench.get("repeats", 5))
    gamma = float(config.bench.get("gamma", 1.0))
    W = make_basis(config.d, config.m, np.random.default_rng(config.seed))
    shapes = [GridShape(r, c) for r, c in config.bench["sizes"]]
    timings = time_prox_sizes(W, config.priors, shapes, gamma, repeats, config.seed)
    rows = []
    for shape, (median, cache_seconds) in zip(shapes, timings):
        rows.append((shape.n, median, cache_seconds))
        log.info("n=%d: median %.4fs (cache %.4fs)", shape.n, median, cache_seconds)
    path = os.path.join(out, "prox_bench.csv")
    with open(path, "w") as fh:
        fh.write("n,median_seconds,cache_seconds\n")
        for n, median, cache_seconds in rows:
            fh.write(f"{n},{median!r},{cache_seconds!r}\n")
    print(f"{'n':>10}{'median_s':>14}{'cache_s':>14}{'ratio':>8}")
    for i, (n, median, cache_seconds) in enumerate(rows):
        ratio = f"{median / rows[i - 1][1]:.2f}" if i else ""
        print(f"{n:>10}{median:>14.5f}{cache_seconds:>14.5f}{ratio:>8}")
    return {"path": path, "rows": rows}


# ---------------------------------------------------------------------- CLI


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--d", type=int, help="number of bands")
    p.add_argument("--m", type=int, help="number of channels")
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float, help="prior scale for every band")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmrfprox", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic instance")
    _add_common(synth)

    race = sub.add_parser("race", help="run and trace the solvers on one instance")
    _add_common(race)
    race.add_argument("--input", help="directory written by `synth`")
    race.add_argument("--synth", action="store_true", help="generate the instance inline")
    race.add_argument("--solvers", help="comma-separated subset of admm,fb,fista")
    race.add_argument("--gamma", type=float, help="ADMM penalty")
    race.add_argument("--max-iters", dest="max_iters", type=int)
    race.add_argument("--tol", type=float)
    race.add_argument("--record-every", dest="record_every", type=int)

    bench = sub.add_parser("prox-bench", help="time the closed-form prox across grid sizes")
    _add_common(bench)
    bench.add_argument("--sizes", help="comma-separated ROWSxCOLS list")
    bench.add_argument("--repeats", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, _overrides(args))
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "race":
            cmd_race(config, input_dir=args.input, synth=args.synth)
        else:
            cmd_prox_bench(config)
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"gmrfprox {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
