"""Command-line interface: ``lsmselect {simulate,fit,replicate,pilot,evaluate}``.

Every flag may also be set in a ``key = value`` config file passed with
``--config``; flags given on the command line win. Exit codes are 0 on
success, 1 on numerical failure and 2 on usage or data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional


from . import io
from .core import ActiveSet, Hyperparams
from .exceptions import LSMError, NumericalError
from .harness import (
    METHODS,
    PilotConfig,
    StudyConfig,
    default_jobs,
    run_methods,
    run_pilot,
    run_study,
)
from .metrics import evaluate
from .simulate import REGIMES, SimConfig, derive_seed, generate

logger = logging.getLogger("lsmselect")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; explicit flags override it")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--verbose", action="store_true")


def _sim_flags(p):
    p.add_argument("--regime", choices=sorted(REGIMES) + ["custom"], default="less_sparse")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--q", type=int, default=25)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--n-noise", type=int, default=0)
    p.add_argument("--alpha-low", type=float, default=-1.0, help="used with --regime custom")
    p.add_argument("--alpha-high", type=float, default=-0.5, help="used with --regime custom")
    p.add_argument("--beta-mean", type=float, default=1.0)
    p.add_argument("--beta-spread", type=float, default=0.1)
    p.add_argument("--beta-spread-kind", choices=["variance", "sd"], default="variance")


def _hyper_flags(p):
    d = Hyperparams()
    p.add_argument("--lambda-weight", type=float, default=d.lambda_weight,
                   help="weight of the covariate likelihood")
    p.add_argument("--eta0", type=float, default=d.eta0)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--stop-tol", type=float, default=d.stop_tol)
    p.add_argument("--stop-patience", type=int, default=d.stop_patience)
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--lambda-grid", type=_floats, default=None)
    p.add_argument("--delta-grid", type=_floats, default=d.delta_grid)
    p.add_argument("--optimizer", choices=["adam", "adagrad"], default=d.optimizer_kind)
    p.add_argument("--criterion", choices=["aic", "logloss"], default=d.selection_criterion)
    p.add_argument("--aic-loss", choices=["refit", "path"], default=d.aic_loss)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $LSMSELECT_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsmselect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw synthetic networks and covariates")
    _common(p)
    _sim_flags(p)
    p.add_argument("--replicates", type=int, default=1)

    p = sub.add_parser("fit", help="fit one data set")
    _common(p)
    _hyper_flags(p)
    p.add_argument("--adjacency", required=True)
    p.add_argument("--network-format", choices=["adjacency", "edgelist"], default="adjacency")
    p.add_argument("--covariates", required=True)
    p.add_argument("--id-column", default=None, help="covariate column holding node labels")
    p.add_argument("--method", choices=METHODS, default="melasso")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--truth", default=None, help="truth file from simulate, for TN/TP rates")

    p = sub.add_parser("replicate", help="simulation study over replicates and noise levels")
    _common(p)
    _sim_flags(p)
    _hyper_flags(p)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--noise-levels", type=_ints, default=(0, 10, 20))
    p.add_argument("--methods", type=_names, default=METHODS)

    p = sub.add_parser("pilot", help="screen covariates on pilot networks")
    _common(p)
    _hyper_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pilot-count", type=int, default=10)
    p.add_argument("--drop-fraction", type=float, default=0.7)
    p.add_argument("--rare-prevalence", type=float, default=0.1)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--skip-full-phase", action="store_true",
                   help="only screen; do not refit the remaining networks")

    p = sub.add_parser("evaluate", help="recompute metrics for a snapshot")
    _common(p)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--adjacency", required=True)
    p.add_argument("--network-format", choices=["adjacency", "edgelist"], default="adjacency")
    p.add_argument("--covariates", required=True)
    p.add_argument("--id-column", default=None)
    p.add_argument("--truth", default=None)
    return parser


def read_config(path) -> Dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


def _config_path(argv: List[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    command = next((t for t in argv if not t.startswith("-")), None)
    if path is None or command not in COMMANDS:
        return parser.parse_args(argv)
    settings = read_config(path)
    sub = _subparser(parser, command)
    known = {opt: a for a in sub._actions for opt in a.option_strings}
    extra = []
    for key, value in settings.items():
        flag = "--" + key
        if flag not in known or flag in ("--config", "--help"):
            raise UsageError(f"{path}: unknown key {key!r}")
        if known[flag].nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                extra.append(flag)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"{path}: {key} expects a boolean")
        else:
            extra += [flag, value]
    # config values go right after the subcommand so explicit flags override them
    pos = argv.index(command) + 1
    return parser.parse_args(argv[:pos] + extra + argv[pos:])


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def _hyper(args) -> Hyperparams:
    return Hyperparams(
        lambda_weight=args.lambda_weight, eta0=args.eta0, max_iters=args.max_iters,
        stop_tol=args.stop_tol, stop_patience=args.stop_patience, tau=args.tau,
        lambda_grid=args.lambda_grid, delta_grid=args.delta_grid,
        optimizer_kind=args.optimizer, selection_criterion=args.criterion,
        aic_loss=args.aic_loss, seed=args.seed,
    )


def _sim(args, seed) -> SimConfig:
    cfg = SimConfig(n=args.n, q=args.q, k=args.k, n_noise=args.n_noise,
                    alpha_low=args.alpha_low, alpha_high=args.alpha_high,
                    beta_mean=args.beta_mean, beta_spread=args.beta_spread,
                    beta_spread_kind=args.beta_spread_kind, seed=seed)
    if args.regime != "custom":
        low, high = REGIMES[args.regime]
        cfg = cfg.with_(alpha_low=low, alpha_high=high)
    return cfg


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else default_jobs()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(rows: List[dict], path, columns=None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in columns])


def _load_data(args):
    for p in (args.adjacency, args.covariates):
        if not Path(p).is_file():
            raise UsageError(f"no such file: {p}")
    if args.id_column:
        cov, ids = io.read_covariates(args.covariates, id_column=args.id_column)
        net = io.read_network(args.adjacency, args.network_format, node_ids=ids)
    else:
        cov = io.read_covariates(args.covariates)
        net = io.read_network(args.adjacency, args.network_format)
    if net.n != cov.n:
        raise UsageError(f"{args.adjacency} has {net.n} nodes but {args.covariates} has {cov.n} rows")
    return net, cov


def _read_truth(path) -> ActiveSet:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError:
        raise UsageError(f"no such file: {path}") from None
    return ActiveSet(tuple(doc["active"]))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = _out_dir(args)
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    entries = []
    for r in range(args.replicates):
        cfg = _sim(args, derive_seed(args.seed, r))
        net, cov, truth = generate(cfg)
        stem = f"rep{r:03d}"
        io.write_network(net, out / f"{stem}_adjacency.csv", "adjacency")
        io.write_covariates(cov, out / f"{stem}_covariates.csv")
        doc = {"seed": cfg.seed, "regime": args.regime, "n_noise": cfg.n_noise,
               "active": list(truth.active_true.indices),
               "cluster_assignment": truth.cluster_assignment.tolist(),
               "Z": truth.Z_true.tolist(), "alpha": truth.alpha_true.tolist(),
               "beta": truth.beta_true.tolist(), "gamma": truth.gamma_true.tolist()}
        with open(out / f"{stem}_truth.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        entries.append(io.ManifestEntry(stem, f"{stem}_adjacency.csv", f"{stem}_covariates.csv"))
    io.write_manifest(io.DatasetManifest(tuple(entries)), out / "manifest.csv")
    print(f"wrote {args.replicates} replicate(s) to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    net, cov = _load_data(args)
    hyper = _hyper(args)
    truth = _read_truth(args.truth) if args.truth else None
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore")
        outcome = run_methods(net, cov, hyper, (args.method,), args.k, args.restarts, truth)[args.method]
    out = _out_dir(args)
    state = outcome.fit.state
    if args.method == "network_only":
        from .joint import posthoc_covariate_fit
        state = posthoc_covariate_fit(state, cov)
    stage = "refit" if outcome.selection is not None else "stage1"
    extra = {"method": args.method}
    if outcome.selection is not None:
        extra.update(chosen_lambda=repr(outcome.selection.chosen_lambda),
                     chosen_delta=repr(outcome.selection.chosen_delta))
    snap = io.ModelSnapshot(state=state, hyper=hyper, active=outcome.active, seed=args.seed,
                            checksum=io.data_checksum(net, cov), stage=stage, extra=extra)
    io.write_snapshot(snap, out / "snapshot.json")
    io.write_report(outcome.report, out / "report.json")
    io.export_trace(outcome.fit.trace, out / "trace.csv")
    rep = outcome.report
    print(f"{args.method}: network AUC {rep.auc_network:.4f}, "
          f"covariate AUC {rep.auc_covariates_mean:.4f}, iterations {outcome.fit.iterations_run}")
    if outcome.active is not None:
        kept = [cov.names[j] for j in outcome.active.indices]
        print(f"kept {len(kept)} of {cov.q} covariates: {','.join(kept)}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    unknown = set(args.methods) - set(METHODS)
    if unknown:
        raise UsageError(f"unknown methods {sorted(unknown)}")
    if any(x > args.q or x < 0 for x in args.noise_levels):
        raise UsageError("noise levels must lie in [0, q]")
    base = _sim(args, args.seed)
    cfg = StudyConfig(regime=args.regime, noise_levels=tuple(args.noise_levels),
                      replicates=args.replicates, methods=tuple(args.methods),
                      master_seed=args.seed, restarts=args.restarts, sim=base,
                      hyper=_hyper(args))
    result = run_study(cfg, jobs=_jobs(args),
                       progress=lambda r: logger.info("replicate %d done", r))
    out = _out_dir(args)
    io.export_results(result.rows, out / "results.csv")
    _write_rows(result.table1(), out / "table1.csv")
    _write_rows(result.table2(), out / "table2.csv",
                None if result.table2() else ["regime", "n_noise", "method", "replicates"])
    _write_rows(result.failures, out / "failures.csv",
                ["regime", "n_noise", "replicate", "error"])
    for rec in result.table1():
        print(f"{rec['regime']} noise={rec['n_noise']} {rec['method']}: "
              f"cov AUC {rec['auc_covariates_mean_mean']:.3f} ({rec['auc_covariates_mean_sd']:.3f}), "
              f"net AUC {rec['auc_network_mean']:.3f} ({rec['auc_network_sd']:.3f})")
    for rec in result.table2():
        tn = rec["tn_rate_mean"]
        print(f"{rec['regime']} noise={rec['n_noise']} {rec['method']}: "
              f"TN {'NA' if tn is None else f'{tn:.2f}'}, TP {rec['tp_rate_mean']:.2f}")
    if result.failures:
        print(f"{len(result.failures)} replicate(s) failed; see failures.csv", file=sys.stderr)
    return EXIT_OK


def cmd_pilot(args) -> int:
    if not Path(args.manifest).is_file():
        raise UsageError(f"no such file: {args.manifest}")
    manifest = io.read_manifest(args.manifest)
    datasets = []
    for e in manifest.entries:
        cov = io.read_covariates(e.covariates_path)
        net = io.read_network(e.adjacency_path, e.format)
        datasets.append((e.id, net, cov))
    cfg = PilotConfig(args.pilot_count, args.drop_fraction, args.rare_prevalence, args.seed)
    report = run_pilot(datasets, cfg, _hyper(args), args.k, _jobs(args),
                       full_phase=not args.skip_full_phase)
    out = _out_dir(args)
    rows = [{"covariate": name, "drop_count": int(report.drop_counts[j]),
             "min_prevalence": float(report.min_prevalence[j]),
             "excluded": int(report.excluded[j])} for j, name in enumerate(report.names)]
    _write_rows(rows, out / "pilot_screening.csv",
                ["covariate", "drop_count", "min_prevalence", "excluded"])
    if report.full_phase:
        _write_rows(report.full_phase, out / "pilot_full_phase.csv")
    summary = {"pilot_ids": list(report.pilot_ids), "retained": report.retained,
               "reduction_percent": report.reduction_percent}
    with open(out / "pilot_summary.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"retained {len(report.retained)} of {len(report.names)} covariates; "
          f"data collection reduced by {report.reduction_percent:.1f}%")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if not Path(args.snapshot).is_file():
        raise UsageError(f"no such file: {args.snapshot}")
    net, cov = _load_data(args)
    snap = io.read_snapshot(args.snapshot, net, cov)
    q_total = cov.q
    if snap.active is not None:
        cov = cov.subset(snap.active.indices)
    snap.state.check_compatible(net.n, cov.q)
    truth = _read_truth(args.truth) if args.truth else None
    rep = evaluate(net, cov, snap.state, selected=snap.active, truth=truth, q_total=q_total)
    out = _out_dir(args)
    io.write_report(rep, out / "evaluation.json")
    print(f"network AUC {rep.auc_network:.4f}, covariate AUC {rep.auc_covariates_mean:.4f}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "replicate": cmd_replicate,
            "pilot": cmd_pilot, "evaluate": cmd_evaluate}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, LSMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
