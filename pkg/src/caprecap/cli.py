"""Command-line entry point.

Exit codes: 0 success, 1 malformed input or config, 2 no double captures,
3 a verification check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import inspect
import sys
from pathlib import Path
from typing import List, Optional


from . import __version__
from . import analysis as an
from . import experiments as ex
from . import io as cio
from .errors import CaptureRecaptureError, ZeroRecapture
from .estimators import RecaptureObservation, adjusted_ht, naive_lp
from .population import PowerLawSpec, power_law_population
from .sampling import (
    Stage,
    cross_tabulate,
    sample_degree_biased,
    sample_uniform,
    simulate_rds,
    stratum_capture,
)
from .seeding import derive_rng

EXIT_OK, EXIT_INPUT, EXIT_ZERO_RECAPTURE, EXIT_CHECK_FAILED = 0, 1, 2, 3


def manifest(config: dict, seed: Optional[int]) -> dict:
    return {"version": __version__, "seed": seed, "config": config}


# ---------------------------------------------------------------------------
# generate-network


def cmd_generate_network(args) -> int:
    if args.model == "uganda":
        pop = ex.uganda_like_population(N=args.n or 2402, sd_degree=args.sd, seed=args.seed)
    else:
        spec = PowerLawSpec(args.exponent, args.d_min, args.d_max if args.d_max else (args.n or 2500) - 1)
        pop = power_law_population(args.n or 2500, spec, derive_rng(args.seed, 0))
    files = {args.out: cio.population_csv(pop)}
    if args.edges:
        files[args.edges] = cio.edges_csv(pop.network)
    cio.atomic_write_many(files)
    print(f"wrote {pop.size} individuals to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample


def _draw(pop, scheme: str, size: Optional[int], stratum: Optional[str], max_recruits: int, rng, stage):
    if scheme == "uniform":
        return sample_uniform(pop, size, rng, stage), None
    if scheme == "degree":
        return sample_degree_biased(pop, size, rng, stage), None
    if scheme == "stratum":
        return stratum_capture(pop, stratum).as_stage(stage), None
    if pop.network is None:
        raise cio.InputError("rds scheme needs --edges")
    membership, forest = simulate_rds(pop.network, size, max_recruits, rng)
    return membership.as_stage(stage), forest


def cmd_sample(args) -> int:
    pop = cio.read_population(args.population, args.edges)
    for scheme, size in ((args.capture, args.capture_size), (args.recapture, args.recapture_size)):
        if scheme != "stratum" and size is None:
            raise cio.InputError(f"scheme {scheme!r} needs a sample size")
    cap, cap_forest = _draw(pop, args.capture, args.capture_size, args.stratum,
                            args.max_recruits, derive_rng(args.seed, 1), Stage.CAPTURE)
    rec, rec_forest = _draw(pop, args.recapture, args.recapture_size, args.stratum,
                            args.max_recruits, derive_rng(args.seed, 2), Stage.RECAPTURE)
    files = {args.out: cio.membership_csv(cap, rec, pop.degrees)}
    forest = rec_forest or cap_forest
    if args.forest:
        if forest is None:
            raise cio.InputError("--forest requires an rds stage")
        files[args.forest] = cio.forest_csv(forest)
    cio.atomic_write_many(files)
    c = cross_tabulate(cap, rec)
    print(f"capture={c.s1} recapture={c.s2} both={c.a11}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate / count-table


def _fmt6(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6g}"


def _table_output(results) -> str:
    return cio.render_csv(
        ["group", "naive", "adjusted", "naive_rounded", "adjusted_rounded"],
        ([r.group, r.naive, r.adjusted, r.naive_rounded, r.adjusted_rounded] for r in results),
    )


def _print_table(results) -> None:
    print(f"{'group':<12} {'naive':>12} {'adjusted':>12} {'naive_int':>10} {'adj_int':>10}")
    for r in results:
        note = f"  ({r.error})" if r.error else ""
        print(f"{r.group:<12} {_fmt6(r.naive):>12} {_fmt6(r.adjusted):>12} "
              f"{'' if r.naive is None else r.naive_rounded:>10} "
              f"{'' if r.adjusted is None else r.adjusted_rounded:>10}{note}")


def cmd_estimate(args) -> int:
    if args.table:
        results = ex.run_count_table(cio.read_count_table(args.table))
        _print_table(results)
        if args.out:
            cio.atomic_write_text(args.out, _table_output(results))
        return EXIT_ZERO_RECAPTURE if any(r.error for r in results) else EXIT_OK
    if args.membership:
        cap, rec, w = cio.read_membership(args.membership)
        members = rec.members
        obs = RecaptureObservation.from_arrays(cap.size, w[members], cap.flags[members])
    elif args.recapture:
        if args.capture_size is None:
            raise cio.InputError("--recapture needs --capture-size")
        obs = cio.read_recapture(args.recapture, args.capture_size)
    else:
        raise cio.InputError("give one of --membership, --recapture or --table")
    reports = [naive_lp(obs.counts), adjusted_ht(obs)]
    for r in reports:
        print(f"{r.estimator_kind.value:<11} {r.estimate:.6g}  (rounded {r.rounded})  "
              f"S1={r.counts.s1} S2={r.counts.s2} a11={r.counts.a11}")
    if args.out:
        cio.atomic_write_text(args.out, cio.render_json({"estimates": [r.to_dict() for r in reports]}))
    return EXIT_OK


def cmd_count_table(args) -> int:
    results = ex.run_count_table(cio.read_count_table(args.table))
    _print_table(results)
    if args.out:
        cio.atomic_write_text(args.out, _table_output(results))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def _population_from(cfg: dict) -> "ex.Population":
    params = dict(cfg)
    allowed = set(inspect.signature(ex.uganda_like_population).parameters)
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise cio.InputError(f"population: unknown keys {unknown}; allowed {sorted(allowed)}")
    return ex.uganda_like_population(**params)


def _check_keys(cfg: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise cio.InputError(f"{where}: unknown keys {unknown}; allowed {sorted(allowed)}")


def run_sweep_config(cfg: dict, workers: int, seed: Optional[int]):
    """Returns (csv text, json-able dict)."""
    cfg = dict(cfg)
    kind = cfg.pop("experiment", "lambda_sweep")
    if seed is not None:
        cfg["seed"] = seed
    if kind == "lambda_sweep":
        if "lambdas" in cfg and not isinstance(cfg["lambdas"], list):
            raise cio.InputError("lambdas must be a list")
        sc = cio.build_dataclass(ex.SweepConfig, cfg, "sweep config")
        summary = ex.run_lambda_sweep(sc, workers)
        rows = summary.rows()
        text = cio.render_csv(["lambda", "estimator", "mean", "std", "degenerate_runs"],
                              ([r["lambda"], r["estimator"], r["mean"], r["std"], r["degenerate_runs"]]
                               for r in rows))
        return text, {"manifest": manifest(dict(sc.to_dict(), experiment=kind), sc.seed),
                      "summary": summary.to_dict()}
    if kind in ("stratum", "capture_size"):
        base = {"population", "recapture_size", "replicates", "seed", "rds_size", "max_recruits"}
        extra = {"labels"} if kind == "stratum" else {"sizes", "capture_kinds"}
        _check_keys(cfg, base | extra, f"{kind} config")
        pop = _population_from(cfg.get("population", {}))
        common = dict(recapture_size=cfg.get("recapture_size", 300 if kind == "stratum" else 200),
                      replicates=cfg.get("replicates", 100 if kind == "stratum" else 50),
                      seed=cfg.get("seed", 0), rds_size=cfg.get("rds_size", 927),
                      max_recruits=cfg.get("max_recruits", 3))
        if kind == "stratum":
            labels = cfg.get("labels") or sorted(set(pop.strata.tolist()))
            summaries = [ex.run_stratum_experiment(pop, label, **common) for label in labels]
        else:
            summaries = ex.run_capture_size_sweep(
                pop, cfg.get("sizes", list(range(100, 1501, 100))),
                cfg.get("capture_kinds", ["uniform", "degree"]), **common)
        rows = [r for s in summaries for r in s.rows()]
        header = ["group", "capture_kind", "capture_size", "estimator", "mean", "std", "degenerate_runs"]
        text = cio.render_csv(header, ([r[h] for h in header] for r in rows))
        echo = dict(cfg, experiment=kind)
        return text, {"manifest": manifest(echo, common["seed"]), "rows": rows}
    raise cio.InputError(f"unknown experiment {kind!r}")


def cmd_sweep(args) -> int:
    cfg = cio.load_config(args.config) if args.config else {}
    text, summary = run_sweep_config(cfg, args.workers, args.seed)
    prefix = Path(args.out)
    cio.atomic_write_many({prefix.with_suffix(".csv"): text,
                           prefix.with_suffix(".json"): cio.render_json(summary)})
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

DEFAULT_VERIFY = {
    "seed": 0,
    "checks": [
        {"type": "concentration", "joint": False, "N": 10000, "alpha1": 0.1, "alpha2": 0.1,
         "capture": "uniform", "replicates": 10000,
         "degrees": {"kind": "power_law", "exponent": 2.5, "d_min": 3, "d_max": 30}},
        {"type": "concentration", "joint": True, "N": 10000, "alpha1": 0.1, "alpha2": 0.1,
         "capture": "uniform", "replicates": 10000,
         "degrees": {"kind": "power_law", "exponent": 2.5, "d_min": 3, "d_max": 30}},
        {"type": "sandwich", "N": 2000, "alpha1": 0.1, "alpha2": 0.1, "replicates": 10000,
         "degrees": {"kind": "regular", "degree": 4}},
        {"type": "sandwich", "N": 2000, "alpha1": 0.1, "alpha2": 0.1, "replicates": 10000,
         "degrees": {"kind": "two_point", "low": 1, "high": 20, "p_high": 0.1}},
        {"type": "theorem1", "N": 10000, "alpha1": 0.1, "alpha2": 0.1, "capture": "degree",
         "replicates": 1000,
         "degrees": {"kind": "power_law", "exponent": 2.5, "d_min": 3, "d_max": 30}},
        {"type": "indifference", "capture_a": "uniform", "capture_b": "degree", "tolerance": 0.05,
         "N": 10000, "alpha1": 0.1, "alpha2": 0.05, "normalization": "mean", "replicates": 2000,
         "degrees": {"kind": "two_point", "low": 1, "high": 10, "p_high": 0.1}},
    ],
}

_CHECK_EXTRAS = {
    "concentration": {"joint", "slack"},
    "sandwich": {"slack"},
    "theorem1": {"slack"},
    "theorem1_trend": {"sizes"},
    "indifference": {"capture_a", "capture_b", "tolerance"},
}


def _scenario(d: dict, where: str) -> an.ScenarioConfig:
    d = dict(d)
    degrees = cio.build_dataclass(an.DegreeModel, d.pop("degrees", {}), f"{where}.degrees")
    if degrees.values is not None:
        degrees = dataclasses.replace(degrees, values=tuple(degrees.values))
    return cio.build_dataclass(an.ScenarioConfig, dict(d, degrees=degrees), where)


def run_check(check: dict, seed: Optional[int], where: str):
    check = dict(check)
    kind = check.pop("type", None)
    if kind not in _CHECK_EXTRAS:
        raise cio.InputError(f"{where}: unknown check type {kind!r}")
    extras = {k: check.pop(k) for k in list(check) if k in _CHECK_EXTRAS[kind]}
    if seed is not None:
        check["seed"] = seed
    if kind == "indifference":
        check["capture"] = extras.get("capture_a", "uniform")
    cfg = _scenario(check, where)
    if kind == "concentration":
        return an.verify_concentration(cfg, extras.get("joint", False), extras.get("slack", 3.0))
    if kind == "sandwich":
        return an.verify_lp_sandwich(cfg, slack=extras.get("slack", 3.0))
    if kind == "theorem1":
        return an.verify_theorem1_interval(cfg, extras.get("slack", 3.0))
    if kind == "theorem1_trend":
        return an.theorem1_trend(cfg, extras.get("sizes", (1000, 10000, 100000)))
    cfg_b = dataclasses.replace(cfg, capture=extras.get("capture_b", "degree"))
    return an.verify_first_stage_indifference(cfg, cfg_b, extras.get("tolerance", 0.05))


def run_verify_config(cfg: dict, seed: Optional[int]):
    _check_keys(cfg, {"seed", "checks"}, "verify config")
    if seed is None:
        seed = cfg.get("seed")
    checks = cfg.get("checks", DEFAULT_VERIFY["checks"])
    reports = [run_check(c, seed, f"checks[{i}]") for i, c in enumerate(checks)]
    return reports, {"manifest": manifest(dict(cfg, checks=checks), seed),
                     "reports": [r.to_dict() for r in reports],
                     "passed": all(r.passed for r in reports)}


def cmd_verify(args) -> int:
    cfg = cio.load_config(args.config) if args.config else dict(DEFAULT_VERIFY)
    reports, doc = run_verify_config(cfg, args.seed)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check}  {_describe(r)}")
    if args.out:
        cio.atomic_write_text(args.out, cio.render_json(doc))
    return EXIT_OK if doc["passed"] else EXIT_CHECK_FAILED


def _describe(r) -> str:
    if isinstance(r, an.ConcentrationReport):
        return (f"{r.statistic}: mean={r.empirical_mean:.6g} expected={r.expectation:.6g} "
                f"violations={r.violations}/{r.replicates} bound={r.bound:.3g}")
    if isinstance(r, an.SandwichReport):
        return f"mean={r.empirical_mean:.6g} in [{r.lower:.6g}, {r.upper:.6g}] (dropped {r.dropped})"
    if isinstance(r, an.Theorem1Report):
        return f"coverage={r.coverage:.6g} required={r.required:.6g} median|err|={r.median_abs_error:.4g}"
    if isinstance(r, an.TrendReport):
        return f"sizes={r.sizes} medians={[round(m, 5) for m in r.medians]}"
    return (f"adjusted {r.adjusted_mean_a:.6g} vs {r.adjusted_mean_b:.6g} (rel {r.adjusted_rel_diff:.3g}); "
            f"naive {r.naive_mean_a:.6g} vs {r.naive_mean_b:.6g} (rel {r.naive_rel_diff:.3g})")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="caprecap",
        description="Capture-recapture population size estimation with degree-weighted estimators.",
        epilog="exit codes: 0 ok, 1 bad input, 2 no double captures, 3 a check failed",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--workers", type=int, default=ex.default_workers(),
                   help=f"worker processes (default from ${ex.WORKERS_ENV}, else 1)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-network", help="synthesize a population and its network")
    g.add_argument("--model", choices=["power-law", "uganda"], default="power-law")
    g.add_argument("--n", type=int)
    g.add_argument("--exponent", type=float, default=2.5)
    g.add_argument("--d-min", type=int, default=3)
    g.add_argument("--d-max", type=int)
    g.add_argument("--sd", type=float, default=6.0, help="degree sd for --model uganda")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="population CSV (id,degree,stratum)")
    g.add_argument("--edges", help="edge list CSV (source,target)")
    g.set_defaults(func=cmd_generate_network)

    s = sub.add_parser("sample", help="draw capture and recapture stages")
    s.add_argument("--population", required=True)
    s.add_argument("--edges")
    schemes = ["uniform", "degree", "rds", "stratum"]
    s.add_argument("--capture", choices=schemes, default="degree")
    s.add_argument("--capture-size", type=int)
    s.add_argument("--recapture", choices=schemes, default="rds")
    s.add_argument("--recapture-size", type=int)
    s.add_argument("--stratum")
    s.add_argument("--max-recruits", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="membership CSV")
    s.add_argument("--forest", help="recruitment forest CSV")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", help="naive and adjusted estimates from study data")
    e.add_argument("--membership", help="CSV id,in_capture,in_recapture,weight")
    e.add_argument("--recapture", help="CSV weight,in_first (one row per recapture member)")
    e.add_argument("--capture-size", type=int, help="first-stage count for --recapture")
    e.add_argument("--table", help="count table CSV")
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    w = sub.add_parser("sweep", help="run an experiment from a JSON config")
    w.add_argument("config", nargs="?")
    w.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    w.add_argument("--seed", type=int)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="Monte Carlo checks of the estimator theory")
    v.add_argument("config", nargs="?")
    v.add_argument("--out")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("count-table", help="estimates from published aggregate counts")
    c.add_argument("table")
    c.add_argument("--out")
    c.set_defaults(func=cmd_count_table)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ZeroRecapture as exc:
        print(f"error: ZeroRecapture: {exc}", file=sys.stderr)
        return EXIT_ZERO_RECAPTURE
    except CaptureRecaptureError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
