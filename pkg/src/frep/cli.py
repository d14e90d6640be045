"""Command-line interface: ``frep <subcommand> [options]``.

Experiment subcommands read a flat ``key = value`` config file whose keys are
the ExperimentConfig (or ZextConfig) fields; ``--set key=value`` overrides a
file value. Every run writes a JSON summary with schema tag frep-report-v1
and exits with status 0 exactly when no acceptance flag was raised.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_FLAGGED = 1
EXIT_USAGE = 2


# --------------------------------------------------------------------------
# config files


def parse_value(text: str):
    """'3' -> 3, '0.5' -> 0.5, '1,2,3' -> (1, 2, 3), '()' -> (), else the string."""
    t = text.strip()
    if t in ("()", ""):
        return ()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    if "," in t:
        return tuple(parse_value(x) for x in t.split(",") if x.strip())
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def read_config(path: str | None) -> dict:
    out: dict = {}
    if not path:
        return out
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def build_config(cls, file_values: dict, overrides: list[str], **fixed):
    vals = dict(file_values)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        vals[k.strip()] = parse_value(v)
    vals.update({k: v for k, v in fixed.items() if v is not None})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(vals) - names)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    # single values where a tuple is expected
    for f in dataclasses.fields(cls):
        if f.name in vals and f.name in ("depth_grid", "pattern", "scaling_grid") and not isinstance(vals[f.name], tuple):
            vals[f.name] = (vals[f.name],)
        if f.name == "anchor" and isinstance(vals.get("anchor"), int) and vals.get("point_class") in ("periodic", "preimage"):
            vals["anchor"] = (vals["anchor"],)
    return cls(**vals)


# --------------------------------------------------------------------------
# output


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return _clean(v.item())
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _finish(out: Path, name: str, doc: dict, flags: list, started: float) -> int:
    doc = dict(doc)
    doc.setdefault("schema", "frep-report-v1")
    doc["flags"] = list(flags)
    write_json(out / f"{name}.json", doc)
    write_json(out / f"{name}.timing.json", {"seconds": time.perf_counter() - started})
    for f in flags:
        print(f"FLAG: {f}", file=sys.stderr)
    print(f"wrote {out / (name + '.json')}")
    return EXIT_FLAGGED if flags else 0


# --------------------------------------------------------------------------
# subcommands


def cmd_boundaries(args) -> int:
    from .lsv import MapParams, build_boundary_table

    t0 = time.perf_counter()
    params = MapParams(args.p)
    table = build_boundary_table(params, args.K)
    ks = np.unique(np.concatenate([np.arange(0, min(args.rows, table.K + 1)), [table.K]]))
    out = Path(args.out)
    write_csv(out / "boundaries.csv", ["k", "c_k"], [(int(k), table.c(int(k))) for k in ks])
    doc = {"p": args.p, "K": table.K, "tail_c": table.tail_c, "tail_log": table.tail_log,
           "tail_c_expected": (1.0 / (args.p * 2.0**args.p)) ** (1.0 / args.p)}
    return _finish(out, "boundaries", doc, [], t0)


def _parse_sets(text: str):
    sets = []
    for part in text.split(","):
        lo, hi = part.split(":")
        sets.append((float(lo), float(hi)))
    return sets


def cmd_measure(args) -> int:
    from .lsv import MapParams, build_boundary_table
    from .scaling import estimate_induced_measure

    t0 = time.perf_counter()
    params = MapParams(args.p)
    table = build_boundary_table(params)
    sets = _parse_sets(args.sets)
    est = estimate_induced_measure(params, table, sets, args.chain_length, args.seed, workers=args.workers)
    doc = {"p": args.p, "seed": args.seed, "estimates": [
        {"lo": lo, "hi": hi, "value": e.value, "std_error": e.std_error, "n_steps": e.n_steps}
        for (lo, hi), e in zip(sets, est)]}
    return _finish(Path(args.out), "measure", doc, [], t0)


def cmd_scaling(args) -> int:
    from .lsv import MapParams, build_boundary_table
    from .scaling import FitRejected, estimate_normalizing_sequence

    t0 = time.perf_counter()
    params = MapParams(args.p)
    table = build_boundary_table(params)
    grid = np.logspace(math.log10(args.n_min), math.log10(args.n_max), args.points)
    flags = []
    try:
        m = estimate_normalizing_sequence(params, table, grid, args.trials, args.seed, args.workers)
        doc = {"c": m.c, "alpha": m.alpha, "alpha_hat": m.alpha_hat, "log_correction": m.log_correction,
               "coef": list(m.coef), "diagnostics": m.diagnostics}
        if not m.log_correction and m.diagnostics.get("half_grid_alpha_gap", 0) >= 0.03:
            flags.append("half-grid alpha_hat gap >= 0.03")
    except FitRejected as e:
        doc, flags = {}, [str(e)]
    out = Path(args.out)
    if doc:
        d = doc["diagnostics"]
        write_csv(out / "darling_kac.csv", ["n", "a_hat", "SE"], zip(d["n_grid"], d["a_hat"], d["a_se"]))
    return _finish(out, "scaling", doc, flags, t0)


def _experiment_config(args):
    from .experiments import ExperimentConfig

    return build_config(ExperimentConfig, read_config(args.config), args.set,
                        master_seed=args.seed, workers=args.workers)


def cmd_repp(args) -> int:
    from .experiments import ecdf_table, run_repp

    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    rep = run_repp(cfg)
    out = Path(args.out)
    H = cfg.horizon
    for n, smp in rep.samples.items():
        ev = smp["events"]
        first = smp["first"]
        for d in range(ev.shape[1]):
            col = first if d == 0 else ev[:, d]
            write_csv(out / f"ecdf_depth{n}_event{d + 1}.csv", ["t", "F_hat", "SE"], ecdf_table(col, H))
    for r in rep.depths:
        if r.multiplicity:
            hist = r.multiplicity.get("hist", [])
            write_csv(out / f"multiplicity_depth{r.depth}.csv", ["size", "count"],
                      [(k, c) for k, c in enumerate(hist) if k >= 1])
    doc = rep.to_dict()
    return _finish(out, "repp", doc, rep.flags, t0)


def cmd_conditions(args) -> int:
    from .experiments import check_A_conditions

    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    rows = check_A_conditions(cfg, starts=args.starts)
    flags = []
    if len(rows) >= 2 and rows[-1]["A3_median"] > rows[0]["A3_median"]:
        flags.append("(A3) proxy does not decrease over the depth grid")
    return _finish(Path(args.out), "conditions", {"config": dataclasses.asdict(cfg), "rows": rows}, flags, t0)


def cmd_identity(args) -> int:
    from .experiments import excursion_identity

    t0 = time.perf_counter()
    cfg = _experiment_config(args)
    doc = excursion_identity(cfg, depths=args.depths)
    doc["config"] = {k: v for k, v in dataclasses.asdict(cfg).items() if k != "workers"}
    # the last decade of depths must sit within 5% of the limit
    top = max(r["n"] for r in doc["rows"])
    last = [r for r in doc["rows"] if r["n"] >= top / 10]
    flags = [f"gamma*I ratio {r['ratio']:.4f} at n={r['n']} is off by more than 5%"
             for r in last if not abs(r["ratio"] - 1.0) < 0.05]
    return _finish(Path(args.out), "identity", doc, flags, t0)


def cmd_fixedpoint(args) -> int:
    from .fractional import fixed_point_residual
    from .laws import LawSpec

    t0 = time.perf_counter()
    grid = np.arange(0.0, args.t_max + args.step / 2, args.step)
    law = LawSpec("Exp", 1.0, 1.0) if args.impostor else None
    res = fixed_point_residual(args.alpha, args.theta, args.d, grid, law=law, trials=args.trials,
                               rng=np.random.default_rng(args.seed))
    flags = []
    if not args.impostor and args.d == 1 and args.theta == 1.0 and res >= 2e-3:
        flags.append(f"fixed-point residual {res:.3g} >= 2e-3")
    doc = {"alpha": args.alpha, "theta": args.theta, "d": args.d, "step": args.step,
           "impostor": args.impostor, "residual": res}
    return _finish(Path(args.out), "fixedpoint", doc, flags, t0)


def cmd_kf(args) -> int:
    from .fractional import kf_residual_from_times, simulate_fpp_times

    t0 = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    lam = args.lam if args.lam is not None else math.gamma(1.0 + args.alpha)
    times = simulate_fpp_times(args.alpha, lam, args.trials, args.d_max + 1, rng)
    grid = np.linspace(0.0, args.t_max, args.points)
    res, se = kf_residual_from_times(times, grid, args.alpha, lam, args.d_max)
    flags = []
    limit = 3.0 * se if args.alpha == 1.0 else 0.01
    if res >= limit:
        flags.append(f"Kolmogorov-Feller residual {res:.4g} >= {limit:.4g}")
    doc = {"alpha": args.alpha, "lam": lam, "trials": args.trials, "d_max": args.d_max,
           "residual": res, "batch_se": se, "limit": limit}
    return _finish(Path(args.out), "kf", doc, flags, t0)


def cmd_zext(args) -> int:
    from .experiments import ecdf_table
    from .zext import ZextConfig, run_zext

    t0 = time.perf_counter()
    cfg = build_config(ZextConfig, read_config(args.config), args.set, master_seed=args.seed, workers=args.workers)
    rep = run_zext(cfg)
    out = Path(args.out)
    write_csv(out / "zext_ecdf_event1.csv", ["t", "F_hat", "SE"], ecdf_table(rep.samples["first"], cfg.horizon))
    doc = rep.to_dict()
    doc["config"].pop("workers", None)
    return _finish(out, "zext", doc, rep.flags, t0)


def cmd_laws_selftest(args) -> int:
    from .laws import LawSpec, ks_statistic, sample_waiting

    t0 = time.perf_counter()
    rng = np.random.default_rng(args.seed)
    rows, flags = [], []
    for alpha, lam in ((0.5, 1.0), (0.75, 1.0), (0.5, math.gamma(1.5)), (1.0, 1.0)):
        x = sample_waiting(alpha, lam, 1.0, rng, args.draws)
        spec = LawSpec("Exp" if alpha == 1.0 else "ML_H", alpha, lam)
        ks = ks_statistic(x, spec.cdf)
        rows.append({"alpha": alpha, "lam": lam, "draws": args.draws, "ks": ks})
        if ks >= args.ks_limit:
            flags.append(f"sampler KS {ks:.4g} >= {args.ks_limit} at alpha={alpha}, lam={lam:.4g}")
    return _finish(Path(args.out), "laws_selftest", {"rows": rows}, flags, t0)


# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frep", description="Rare-event point processes of intermittent maps.")
    ap.add_argument("--version", action="version", version=f"frep {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--out", default="frep-out", help="output directory")
        p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("boundaries", help="cell boundaries c_k and tail fit")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--K", type=int, default=100_000)
    p.add_argument("--rows", type=int, default=1000, help="number of c_k written to CSV")
    common(p)
    p.set_defaults(fn=cmd_boundaries)

    p = sub.add_parser("measure", help="invariant measure of intervals in Y")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--sets", required=True, help="lo:hi[,lo:hi...] inside [0.5, 1]")
    p.add_argument("--chain-length", type=int, default=10**7)
    common(p)
    p.set_defaults(fn=cmd_measure)

    p = sub.add_parser("scaling", help="Darling-Kac estimate of a_n and its fit")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--n-min", type=float, default=1e2)
    p.add_argument("--n-max", type=float, default=1e6)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--trials", type=int, default=10**4)
    common(p)
    p.set_defaults(fn=cmd_scaling)

    for name, fn, helptext in (("repp", cmd_repp, "return/hitting REPP experiment"),
                               ("conditions", cmd_conditions, "proxies of the (A) conditions")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        common(p, seed_required=(name == "repp"))
        if name == "conditions":
            p.add_argument("--starts", type=int, default=20_000)
        p.set_defaults(fn=fn)

    p = sub.add_parser("identity", help="gamma(mu(E_n)) I(c_n) against its limit (p > 1)")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--depths", type=lambda t: [int(float(x)) for x in t.split(",")],
                   default=[10**3, 3 * 10**3, 10**4, 3 * 10**4, 10**5])
    common(p)
    p.set_defaults(fn=cmd_identity)

    p = sub.add_parser("fixedpoint", help="residual of the compound fixed-point equation")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--trials", type=int, default=10**6)
    p.add_argument("--impostor", action="store_true", help="use Exp(1) instead of the predicted law")
    common(p)
    p.set_defaults(fn=cmd_fixedpoint)

    p = sub.add_parser("kf", help="Kolmogorov-Feller residual of a simulated FPP")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=None, help="default Gamma(1 + alpha)")
    p.add_argument("--trials", type=int, default=10**6)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--t-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=301)
    common(p)
    p.set_defaults(fn=cmd_kf)

    p = sub.add_parser("zext", help="Z-extension return experiment")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    common(p, seed_required=True)
    p.set_defaults(fn=cmd_zext)

    p = sub.add_parser("laws-selftest", help="sampler vs Mittag-Leffler CDF checks")
    p.add_argument("--draws", type=int, default=10**6)
    p.add_argument("--ks-limit", type=float, default=0.005)
    common(p)
    p.set_defaults(fn=cmd_laws_selftest)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"frep {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
