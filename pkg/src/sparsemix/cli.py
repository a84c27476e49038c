"""Command-line interface.

Subcommands cover the whole pipeline: ``simulate`` writes benchmark datasets,
``fit`` runs the Gibbs sampler and stores a draw archive, ``identify``
relabels the archive in the point-process representation, ``evaluate`` scores
an identified fit, and ``bench`` reproduces a whole results table over a
replication grid.  ``SPARSEMIX_OUT`` sets the default output root.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SparsemixError
from .evaluate import (
    ReferenceParams,
    bayes_reference,
    evaluate_run,
    modal_classification,
)
from .model import PriorSpec
from .postid import IdentifiedDraws, identify
from .sampler import ChainArchive, ChainConfig, run_chain
from .simdata import DESIGNS, builtin, generate, load_csv, write_csv


def _out_root():
    return Path(os.environ.get("SPARSEMIX_OUT", "."))


def _resolve_out(arg):
    path = Path(arg) if arg else _out_root()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_e0(text):
    """'fixed:<value>' or 'gamma:<shape>' -> (policy, value, shape)."""
    kind, _, val = text.partition(":")
    if kind == "fixed":
        return "fixed", float(val), 10.0
    if kind == "gamma":
        return "gamma", 0.01, float(val) if val else 10.0
    raise argparse.ArgumentTypeError(f"cannot parse e0 spec {text!r}")


def _load_config_file(path):
    """Flat key=value config with dotted sections; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def _dataset_from_args(args):
    sources = [args.builtin is not None, args.csv is not None, args.design is not None]
    if sum(sources) != 1:
        raise SystemExit("exactly one of --builtin, --csv, --design is required")
    if args.builtin:
        return builtin(args.builtin)
    if args.csv:
        return load_csv(args.csv, has_header=not args.no_header, label_column=args.label_column)
    design = DESIGNS[args.design]()
    return generate(design, args.sim_seed)


def _prior_from_args(args, cfg):
    policy, value, shape = _parse_e0(cfg.get("prior.e0", args.e0))
    return PriorSpec(
        n_components=int(cfg.get("prior.k", args.k)),
        mean_prior={"standard": "standard", "ng": "normal_gamma"}[
            cfg.get("prior.prior", args.prior)
        ],
        e0_policy=policy,
        e0_value=value,
        e0_shape=shape,
        v1=float(cfg.get("prior.v1", args.v1)),
        v2=float(cfg.get("prior.v2", args.v2)),
        mh_step=float(cfg.get("prior.mh_step", args.mh_step)),
    )


def _chain_from_args(args, cfg):
    return ChainConfig(
        burn_in=int(cfg.get("chain.burnin", args.burnin)),
        iterations=int(cfg.get("chain.iters", args.iters)),
        store_sigma=bool(args.store_sigma),
        store_allocations=not args.no_store_alloc,
        seed=int(cfg.get("chain.seed", args.seed)),
    )


def cmd_simulate(args):
    design = DESIGNS[args.design]()
    out = _resolve_out(args.out)
    manifest = []
    for rep in range(args.reps):
        ds = generate(design, args.seed + rep)
        path = out / f"{design.name}_rep{rep:02d}.csv"
        write_csv(ds, path)
        manifest.append({"rep": rep, "seed": args.seed + rep, "path": str(path), "n": ds.n, "dim": ds.dim})
    print(json.dumps({"design": design.name, "files": manifest}, indent=2))
    return 0


def cmd_fit(args):
    cfg = _load_config_file(args.config) if args.config else {}
    dataset = _dataset_from_args(args)
    spec = _prior_from_args(args, cfg)
    chain_cfg = _chain_from_args(args, cfg)
    out = _resolve_out(args.out)

    t0 = time.perf_counter()
    archive = run_chain(dataset, spec, chain_cfg)
    wall = time.perf_counter() - t0
    archive.save(out)

    hist = np.bincount(archive.k0, minlength=spec.n_components + 1)
    lines = [
        f"dataset = {dataset.name}",
        f"iterations = {chain_cfg.iterations} (burn-in {chain_cfg.burn_in})",
        f"seed = {chain_cfg.seed}",
        f"e0_accept_rate = {archive.accept_rate:.4g}",
        f"wall_seconds = {wall:.2f}",
        "k0_histogram:",
    ]
    lines += [f"  {h}: {hist[h]}" for h in range(len(hist)) if hist[h]]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_identify(args):
    archive = ChainArchive.load(args.archive)
    out = _resolve_out(args.out)
    kpost, points, centroids, identified = identify(
        archive, distance=args.distance, seed=args.seed
    )
    identified.save(out)
    with open(out / "point_process.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,component," + ",".join(f"x{j+1}" for j in range(points.X.shape[1])) + "\n")
        for row in range(points.X.shape[0]):
            cells = [str(int(points.iteration[row])), str(int(points.component[row]))]
            cells += [format(v, ".17g") for v in points.X[row]]
            fh.write(",".join(cells) + "\n")
    msg = {
        "k_hat": kpost.k_hat,
        "m0": kpost.m0,
        "m0_rho": identified.m0_rho,
        "identified": identified.n_identified,
        "distance": args.distance,
        "objective": centroids.objective,
    }
    print(json.dumps(msg, indent=2))
    return 0


def cmd_evaluate(args):
    identified = IdentifiedDraws.load(args.identified)
    archive = ChainArchive.load(args.archive) if args.archive else None

    truth = None
    if args.truth:
        kind, _, spec = args.truth.partition(":")
        if kind == "builtin":
            truth = builtin(spec).true_labels
        elif kind == "csv":
            path, _, col = spec.rpartition(":")
            truth = load_csv(path, label_column=col).true_labels
        else:
            raise SystemExit(f"cannot parse truth source {args.truth!r}")

    ref = None
    if args.ref_design:
        ref = ReferenceParams.from_design(DESIGNS[args.ref_design]())
    elif args.bayes_ref:
        if truth is None:
            raise SystemExit("--bayes-ref needs --truth")
        kind, _, spec = args.truth.partition(":")
        ds = builtin(spec) if kind == "builtin" else load_csv(*spec.rpartition(":")[::2])
        ref = bayes_reference(ds, PriorSpec(n_components=int(np.unique(truth).size)), seed=args.seed)

    if archive is not None:
        report = evaluate_run(archive, identified, truth=truth, ref=ref)
    else:
        from .evaluate import EvalReport, mcr as _mcr, mse_mu as _mse

        report = EvalReport(k_hat=identified.k_hat, m0=identified.m0, m0_rho=identified.m0_rho)
        if truth is not None and identified.alloc is not None:
            report.mcr = _mcr(modal_classification(identified), truth)
        if ref is not None:
            report.mse_mu = _mse(identified, ref)

    out = _resolve_out(args.out)
    text = "\n".join(report.to_lines()) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    lam = report.lambda_lines()
    if lam:
        (out / "lambda_quantiles.tsv").write_text("\n".join(lam) + "\n", encoding="utf-8")
    print(text, end="")
    return 0


# --- bench -----------------------------------------------------------------

_TABLE_CELLS = {
    1: [
        ("equal", "standard", "gamma:10", k) for k in (4, 15, 30)
    ] + [
        ("equal", "ng", "gamma:10", k) for k in (4, 15, 30)
    ] + [
        ("equal", "ng", "fixed:0.01", 4),
        ("equal", "ng", "fixed:0.01", 15),
        ("equal", "ng", "fixed:0.01", 30),
        ("equal", "ng", "fixed:0.001", 30),
        ("equal", "ng", "fixed:0.00001", 30),
    ],
    2: [
        ("unequal", "standard", "gamma:10", k) for k in (4, 15, 30)
    ] + [
        ("unequal", "ng", "fixed:0.01", 4),
        ("unequal", "ng", "fixed:0.01", 15),
        ("unequal", "ng", "fixed:0.01", 30),
        ("unequal", "ng", "fixed:0.001", 30),
        ("unequal", "ng", "fixed:0.00001", 30),
    ],
    3: [
        ("crabs", "standard", "gamma:10", k) for k in (4, 15, 30)
    ] + [
        ("crabs", "ng", "fixed:0.01", k) for k in (4, 15, 30)
    ],
    4: [
        ("iris", "standard", "gamma:10", k) for k in (3, 15, 30)
    ] + [
        ("iris", "ng", "fixed:0.01", k) for k in (3, 15, 30)
    ],
}


def _bench_cell(job):
    """One (cell, replication) pipeline pass; returns a metrics dict."""
    table, cell_idx, rep, data_name, prior_name, e0_text, K, seed, iters, burnin = job
    policy, value, shape = _parse_e0(e0_text)
    if data_name in DESIGNS:
        dataset = generate(DESIGNS[data_name](), seed)
        ref = ReferenceParams.from_design(DESIGNS[data_name]())
    else:
        dataset = builtin(data_name)
        ref = None
    spec = PriorSpec(
        n_components=K,
        mean_prior={"standard": "standard", "ng": "normal_gamma"}[prior_name],
        e0_policy=policy,
        e0_value=value,
        e0_shape=shape,
    )
    config = ChainConfig(burn_in=burnin, iterations=iters, seed=seed)
    archive = run_chain(dataset, spec, config)
    if ref is None:
        ref = bayes_reference(dataset, PriorSpec(n_components=int(np.unique(dataset.true_labels).size)), config=ChainConfig(burn_in=burnin, iterations=iters, seed=seed), seed=seed)
    _, _, _, identified = identify(archive, seed=seed)
    report = evaluate_run(archive, identified, truth=dataset.true_labels, ref=ref)
    out = {
        "table": table,
        "cell": cell_idx,
        "rep": rep,
        "data": data_name,
        "prior": prior_name,
        "e0": e0_text,
        "K": K,
        "k_hat": report.k_hat,
        "m0": report.m0,
        "m0_rho": report.m0_rho,
        "mcr": report.mcr,
        "mse_mu": report.mse_mu,
        "e0_hat": report.e0_summary,
    }
    if table == 3:
        # the crabs table also reports the squared-Euclidean relabeling
        _, _, _, ident_e = identify(archive, distance="euclidean", seed=seed)
        rep_e = evaluate_run(archive, ident_e, truth=dataset.true_labels, ref=ref)
        out["m0_rho_euclid"] = rep_e.m0_rho
        out["mcr_euclid"] = rep_e.mcr
        out["mse_mu_euclid"] = rep_e.mse_mu
    return out


def cmd_bench(args):
    if args.table not in _TABLE_CELLS:
        raise SystemExit(f"unknown table {args.table}; choose from 1-4")
    cells = _TABLE_CELLS[args.table]
    jobs = []
    for ci, (data_name, prior_name, e0_text, K) in enumerate(cells):
        for rep in range(args.reps):
            seed = args.seed + 1000 * ci + rep
            jobs.append(
                (args.table, ci, rep, data_name, prior_name, e0_text, K, seed, args.iters, args.burnin)
            )
    results = []
    workers = args.workers or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_bench_cell, jobs):
                results.append(res)
                print(f"cell {res['cell']} rep {res['rep']}: k_hat={res['k_hat']}", file=sys.stderr)
    else:
        for job in jobs:
            res = _bench_cell(job)
            results.append(res)
            print(f"cell {res['cell']} rep {res['rep']}: k_hat={res['k_hat']}", file=sys.stderr)

    out = _resolve_out(args.out)

    def _mean_se(a):
        if a.size == 0:
            return "-", "-"
        se = a.std(ddof=1) / np.sqrt(a.size) if a.size > 1 else 0.0
        return f"{a.mean():.4g}", f"{se:.2g}"

    cols = ["data", "prior", "e0", "K", "k_hat_mode", "k_hat_agree", "m0_mean",
            "m0_rho_mean", "mcr_mean", "mcr_se", "mse_mu_mean", "mse_mu_se", "e0_hat_median"]
    if args.table == 3:
        cols += ["m0_rho_euclid", "mcr_euclid", "mse_mu_euclid"]
    lines = ["\t".join(cols)]
    for ci, (data_name, prior_name, e0_text, K) in enumerate(cells):
        rows = [r for r in results if r["cell"] == ci]
        k_hats = np.array([r["k_hat"] for r in rows])
        vals, counts = np.unique(k_hats, return_counts=True)
        k_mode = int(vals[counts.argmax()])
        mcrs = np.array([r["mcr"] for r in rows if r["mcr"] is not None], dtype=float)
        mses = np.array([r["mse_mu"] for r in rows if r["mse_mu"] is not None], dtype=float)

        mcr_m, mcr_s = _mean_se(mcrs)
        mse_m, mse_s = _mean_se(mses)
        cells_out = [
            data_name, prior_name, e0_text, K, k_mode, int((k_hats == k_mode).sum()),
            f"{np.mean([r['m0'] for r in rows]):.1f}",
            f"{np.mean([r['m0_rho'] for r in rows]):.3g}",
            mcr_m, mcr_s, mse_m, mse_s,
            f"{np.median([r['e0_hat'] for r in rows]):.3g}",
        ]
        if args.table == 3:
            rho_e = np.array([r["m0_rho_euclid"] for r in rows], dtype=float)
            mcr_e = np.array([r["mcr_euclid"] for r in rows if r["mcr_euclid"] is not None], dtype=float)
            mse_e = np.array([r["mse_mu_euclid"] for r in rows if r["mse_mu_euclid"] is not None], dtype=float)
            cells_out += [
                f"{rho_e.mean():.3g}",
                _mean_se(mcr_e)[0],
                _mean_se(mse_e)[0],
            ]
        lines.append("\t".join(map(str, cells_out)))
    table_path = out / f"table{args.table}.tsv"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / f"table{args.table}_cells.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="sparsemix", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated benchmark datasets")
    p.add_argument("--design", required=True, choices=sorted(DESIGNS))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler and store the archive")
    p.add_argument("--builtin", choices=("iris", "crabs"))
    p.add_argument("--csv")
    p.add_argument("--label-column", default=None)
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--design", choices=sorted(DESIGNS))
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--prior", choices=("standard", "ng"), default="standard")
    p.add_argument("--e0", default="gamma:10", help="fixed:<value> or gamma:<shape>")
    p.add_argument("--v1", type=float, default=0.5)
    p.add_argument("--v2", type=float, default=0.5)
    p.add_argument("--mh-step", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burnin", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store-sigma", action="store_true")
    p.add_argument("--no-store-alloc", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("identify", help="relabel an archive in the point-process representation")
    p.add_argument("--archive", required=True)
    p.add_argument("--distance", choices=("mahalanobis", "euclidean"), default="mahalanobis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="score an identified fit")
    p.add_argument("--identified", required=True)
    p.add_argument("--archive", default=None)
    p.add_argument("--truth", default=None, help="builtin:<name> or csv:<path>:<column>")
    p.add_argument("--ref-design", choices=sorted(DESIGNS), default=None)
    p.add_argument("--bayes-ref", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="reproduce a full results table")
    p.add_argument("--table", type=int, required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burnin", type=int, default=2000)
    p.add_argument("--workers", type=int, default=0, help="0 = one per CPU")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SparsemixError, OSError, ValueError) as err:
        json.dump(
            {"error": type(err).__name__, "message": str(err)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
