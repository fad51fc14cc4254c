"""Command-line pipeline: simulate -> fit -> embed / dist -> predict / eval-holdout.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .cascades import Cascade, InvalidCascadeError
from .characterize import EmbeddingEdges, build_embedding, corpus_edges, wasserstein1
from .forecast import (PublisherModel, absolute_relative_error, expected_holdout_ll,
                       forecast_item, observe_item, pool_publisher_model)
from .io import (CascadeRecord, DataError, ItemModel, ModelFile, atomic_write,
                 embedding_header, format_float, load_model, read_cascades,
                 read_embeddings, save_model, write_cascades)
from .kernels import KernelFamily, KernelParams
from .mixtures import BMMConfig, KMMConfig, fit_dual
from .simulate import SimConfig, simulate_cascades, spawn_rngs

log = logging.getLogger("dmhp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

ENV_HELP = """\
environment overrides:
  DMHP_EM_TOL         relative log-likelihood tolerance for BMM/KMM EM (default 1e-8)
  DMHP_BMM_MAX_ITER   BMM EM iteration cap (default 1000)
  DMHP_KMM_MAX_ITER   KMM EM iteration cap (default 200)
  DMHP_INNER_EVALS    KMM M-step solver evaluation cap (default 200)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_float(name, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"{name} must be a number, got {raw!r}") from None


def _env_int(name, default):
    return int(_env_float(name, default))


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _k_range(text: str) -> range:
    try:
        lo, _, hi = text.partition("..")
        lo, hi = int(lo), int(hi or lo)
    except ValueError:
        raise UsageError(f"--select-k expects LO..HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError(f"invalid component range {text!r}")
    return range(lo, hi + 1)


def _regimes(args) -> tuple[list[SimConfig], np.ndarray]:
    family = KernelFamily.parse(args.kernel)
    n_stars, thetas = _floats(args.n_star), _floats(args.theta)
    cs = _floats(args.c) if args.c is not None else [None]
    count = max(len(n_stars), len(thetas), len(cs))
    def widen(xs, name):
        if len(xs) == 1:
            return xs * count
        if len(xs) != count:
            raise UsageError(f"--{name} has {len(xs)} values, expected 1 or {count}")
        return xs
    n_stars, thetas, cs = widen(n_stars, "n-star"), widen(thetas, "theta"), widen(cs, "c")
    weights = np.array(_floats(args.weights)) if args.weights else np.full(count, 1.0 / count)
    if weights.size != count or np.any(weights < 0) or weights.sum() <= 0:
        raise UsageError("--weights must give one non-negative weight per regime")
    configs = []
    for n, th, c in zip(n_stars, thetas, cs):
        if not 0.0 <= n < 1.0:
            raise UsageError(f"--n-star must lie in [0, 1), got {n}")
        if family is KernelFamily.POWER_LAW and c is None:
            raise UsageError("--c is required for the power-law kernel")
        try:
            kernel = KernelParams(family, th, c)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        configs.append(SimConfig(n, kernel, max_events=args.max_events))
    return configs, weights / weights.sum()


def cmd_simulate(args) -> int:
    if args.num_cascades < 1 or args.num_items < 1:
        raise UsageError("--num-cascades and --num-items must be positive")
    if not args.start_mean >= 0:
        raise UsageError("--start-mean must be non-negative")
    configs, weights = _regimes(args)
    records = []
    for i, rng in enumerate(spawn_rngs(args.seed, args.num_items)):
        item = f"{args.item_prefix}{i}"
        per_regime = rng.multinomial(args.num_cascades, weights)
        cascades = []
        for cfg, n in zip(configs, per_regime):
            if n:
                cascades.extend(simulate_cascades(cfg, int(n), rng))
        order = rng.permutation(len(cascades))
        starts = np.zeros(len(cascades))
        if args.start_mean > 0:
            starts = np.sort(rng.exponential(args.start_mean, len(cascades)))
            starts[0] = 0.0
        for j, idx in enumerate(order):
            records.append(CascadeRecord(item, args.publisher, f"{item}-{j}", cascades[idx],
                                         float(starts[j])))
    write_cascades(args.out, records)
    return EXIT_OK


def _item_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _fit_one(job):
    index, item_id, publisher_id, cascades, opts = job
    seed = _item_seed(opts["seed"], index)
    bmm_cfg = BMMConfig(tol=opts["tol"], max_iter=opts["bmm_max_iter"],
                        restarts=opts["restarts"], seed=seed)
    kmm_cfg = KMMConfig(tol=opts["tol"], max_iter=opts["kmm_max_iter"], restarts=opts["restarts"],
                        inner_max_evals=opts["inner_evals"], solver=opts["solver"],
                        max_parents=opts["max_parents"], seed=seed)
    k_range = range(opts["k_lo"], opts["k_hi"] + 1)
    dual, bmm, kmm, aic_table, bmm_rep, kmm_rep = fit_dual(
        cascades, opts["kernel"], k=opts["k"], k_range=k_range, kmm_k=opts["kmm_k"],
        bmm_config=bmm_cfg, kmm_config=kmm_cfg, penalty=opts["penalty"])
    flags = []
    if kmm is None:
        flags.append("bmm_only: no cascade with two or more events")
    for rep in (bmm_rep, kmm_rep):
        if rep is not None and not rep.converged:
            flags.append("em_not_converged")
    return ItemModel(item_id, publisher_id, len(cascades), bmm, kmm, aic_table,
                     bmm_rep.to_dict(), None if kmm_rep is None else kmm_rep.to_dict(), flags)


def _group(records: list[CascadeRecord], by: str):
    groups: dict[str, tuple[str, list[Cascade]]] = {}
    for rec in records:
        key = rec.item_id if by == "item" else rec.publisher_id
        pub = rec.publisher_id
        if key not in groups:
            groups[key] = (pub, [])
        elif by == "item" and groups[key][0] != pub:
            raise DataError(f"item {key!r} listed under publishers {groups[key][0]!r} and {pub!r}")
        groups[key][1].append(rec.cascade)
    return groups


def cmd_fit(args) -> int:
    family = KernelFamily.parse(args.kernel)
    if args.k is not None and args.k < 1:
        raise UsageError("--k must be >= 1")
    k_range = _k_range(args.select_k)
    records = read_cascades(args.input)
    if not records:
        raise DataError(f"{args.input}: no cascades")
    groups = _group(records, args.group_by)
    opts = {"seed": args.seed, "kernel": family, "k": args.k, "kmm_k": args.kmm_k,
            "k_lo": k_range.start, "k_hi": k_range.stop - 1, "restarts": args.restarts,
            "solver": args.solver, "max_parents": args.max_parents,
            "penalty": args.aic_penalty, "tol": _env_float("DMHP_EM_TOL", 1e-8),
            "bmm_max_iter": _env_int("DMHP_BMM_MAX_ITER", 1000),
            "kmm_max_iter": _env_int("DMHP_KMM_MAX_ITER", 200),
            "inner_evals": _env_int("DMHP_INNER_EVALS", 200)}
    jobs = [(i, key, pub, cascades, opts) for i, (key, (pub, cascades)) in enumerate(groups.items())]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            items = list(pool.map(_fit_one, jobs))
    else:
        items = [_fit_one(job) for job in jobs]

    duals = [it.dual for it in items if it.dual is not None]
    edges = corpus_edges(duals, args.bins).to_dict() if duals else None
    publishers: dict[str, list[str]] = {}
    for it in items:
        publishers.setdefault(it.publisher_id, []).append(it.item_id)
    settings = {"group_by": args.group_by, "k": args.k, "select_k": args.select_k,
                "kmm_k": args.kmm_k, "aic_penalty": args.aic_penalty,
                "restarts": args.restarts, "seed": args.seed,
                "solver": args.solver, "bins": args.bins}
    save_model(args.out, ModelFile(family, items, edges, publishers, settings))
    return EXIT_OK


def cmd_embed(args) -> int:
    model = load_model(args.model)
    fitted = [it for it in model.items if it.dual is not None]
    if not fitted:
        raise DataError("model has no item with a kernel mixture")
    stored = model.bin_edges
    if stored is not None and len(stored["n_star"]) == args.bins + 1:
        edges = EmbeddingEdges.from_dict(stored)
    else:
        edges = corpus_edges([it.dual for it in fitted], args.bins)
    skipped = [it.item_id for it in model.items if it.dual is None]
    if skipped:
        log.warning("skipping %d item(s) without a kernel mixture", len(skipped))
    with atomic_write(args.out, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(embedding_header(edges.bins))
        for it in fitted:
            emb = build_embedding(it.dual, edges)
            writer.writerow([it.item_id] + [format_float(x) for x in emb.flat()]
                            + [int(emb.out_of_range)])
    return EXIT_OK


def _pairs(args, ids):
    if args.all:
        return list(itertools.combinations(ids, 2))
    if not args.pairs:
        raise UsageError("give --pairs FILE or --all")
    out = []
    with open(args.pairs, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise DataError(f"{args.pairs}:{lineno}: expected two item ids")
            if lineno == 1 and row[0] in ("item_a", "a"):
                continue
            out.append((row[0].strip(), row[1].strip()))
    return out


def cmd_dist(args) -> int:
    rows = read_embeddings(args.embeddings)
    pairs = _pairs(args, list(rows))
    with atomic_write(args.out, newline="") if args.out else _stdout() as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_a", "item_b", "distance", "error"])
        for a, b in pairs:
            missing = [x for x in (a, b) if x not in rows]
            if missing:
                writer.writerow([a, b, "", "unknown item(s): " + " ".join(missing)])
                continue
            va, vb = rows[a], rows[b]
            bins = va.size // 3
            dist = sum(wasserstein1(va[j * bins:(j + 1) * bins], vb[j * bins:(j + 1) * bins])
                       for j in range(3))
            writer.writerow([a, b, format_float(dist), ""])
    return EXIT_OK


class _stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def publisher_model(model: ModelFile, publisher: str, max_items: int) -> PublisherModel:
    if publisher not in model.publishers:
        known = ", ".join(sorted(model.publishers)) or "(none)"
        raise DataError(f"unknown publisher {publisher!r}; known publishers: {known}")
    items = [model.item(i) for i in model.publishers[publisher]]
    items = [it for it in items if it.dual is not None]
    if not items:
        raise DataError(f"publisher {publisher!r} has no item with a kernel mixture")
    return pool_publisher_model([it.dual for it in items], [it.n_cascades for it in items],
                                max_items, [it.item_id for it in items])


def cmd_predict(args) -> int:
    model = load_model(args.model)
    pm = publisher_model(model, args.publisher, args.max_items)
    T = args.at_time
    if not T > 0:
        raise UsageError("--at-time must be positive")
    groups: dict[str, list[CascadeRecord]] = {}
    for rec in read_cascades(args.observed):
        groups.setdefault(rec.item_id, []).append(rec)
    with atomic_write(args.out, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "at_time", "predicted_mean", "predicted_variance",
                         "observed_count", "actual_count", "are"])
        for item_id, recs in groups.items():
            observed, horizons = observe_item([r.cascade for r in recs], [r.start for r in recs], T)
            fc = forecast_item(pm, observed, horizons)
            actual = sum(r.cascade.size for r in recs)
            writer.writerow([item_id, format_float(T), format_float(fc.mean),
                             format_float(fc.variance), fc.observed, actual,
                             format_float(absolute_relative_error(fc.mean, actual))])
    return EXIT_OK


def cmd_eval_holdout(args) -> int:
    model = load_model(args.model)
    T = args.at_time
    if not T > 0:
        raise UsageError("--at-time must be positive")
    cache: dict[str, PublisherModel] = {}
    lines = []
    for rec in read_cascades(args.cascades):
        pub = args.publisher or rec.publisher_id
        if pub not in cache:
            cache[pub] = publisher_model(model, pub, args.max_items)
        res = expected_holdout_ll(cache[pub], rec.cascade, T)
        lines.append(json.dumps({
            "cascade_id": rec.cascade_id, "item_id": rec.item_id, "publisher_id": pub,
            "at_time": T, "observed_events": rec.cascade.size - res.holdout_events,
            "holdout_events": res.holdout_events, "expected_hll": res.expected_hll,
            "hll_per_event": res.hll_per_event,
            "predictive_hll": res.predictive_hll, "posterior": res.posterior.tolist()},
            allow_nan=False))
    with atomic_write(args.out) if args.out else _stdout() as fh:
        for line in lines:
            fh.write(line + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dmhp", description=__doc__.splitlines()[0], epilog=ENV_HELP,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate cascades to JSONL", epilog=ENV_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n-star", required=True, help="branching factor(s), comma-separated per regime")
    p.add_argument("--kernel", choices=["exp", "pl"], required=True)
    p.add_argument("--theta", required=True, help="kernel decay(s), comma-separated per regime")
    p.add_argument("--c", help="power-law cutoff(s)")
    p.add_argument("--weights", help="regime weights (default uniform)")
    p.add_argument("--num-cascades", type=int, required=True, help="cascades per item")
    p.add_argument("--num-items", type=int, default=1)
    p.add_argument("--publisher", default="p0")
    p.add_argument("--item-prefix", default="item")
    p.add_argument("--start-mean", type=float, default=0.0,
                   help="mean delay between item publication and cascade starts (0: all at once)")
    p.add_argument("--max-events", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit dual mixtures per item", epilog=ENV_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--input", required=True)
    p.add_argument("--group-by", choices=["item", "publisher"], default="item")
    p.add_argument("--kernel", choices=["exp", "pl"], default="pl")
    p.add_argument("--k", type=int, help="fixed component count (default: AIC over --select-k)")
    p.add_argument("--select-k", default="1..5", help="AIC search range LO..HI")
    p.add_argument("--aic-penalty", choices=["components", "parameters"], default="components",
                   help="count k components (default) or 2k-1 free parameters in AIC")
    p.add_argument("--kmm-k", type=int, help="kernel mixture size (default: the BMM k)")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--solver", choices=["nelder-mead", "lbfgs"], default="nelder-mead",
                   help="KMM M-step solver; lbfgs uses analytic gradients and is faster")
    p.add_argument("--max-parents", type=int, help="only the latest M events act as parents")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("embed", help="diffusion embeddings to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("dist", help="embedding distances for item pairs")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--pairs", help="CSV of item id pairs")
    p.add_argument("--all", action="store_true", help="every pair of items")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("predict", help="item popularity forecasts", epilog=ENV_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", required=True)
    p.add_argument("--publisher", required=True)
    p.add_argument("--observed", required=True)
    p.add_argument("--at-time", type=float, required=True,
                   help="observation time since item publication")
    p.add_argument("--max-items", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval-holdout", help="expected holdout log-likelihood per cascade")
    p.add_argument("--model", required=True)
    p.add_argument("--cascades", required=True)
    p.add_argument("--at-time", type=float, required=True,
                   help="observation time on each cascade's own clock")
    p.add_argument("--publisher", help="score every cascade against this publisher")
    p.add_argument("--max-items", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_holdout)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dmhp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidCascadeError, FileNotFoundError, KeyError) as exc:
        print(f"dmhp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, OverflowError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        print(f"dmhp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
