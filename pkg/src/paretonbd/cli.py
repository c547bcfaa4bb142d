"""Command-line interface.

Subcommands mirror the pipeline stages so each is runnable on its own:

  ingest     normalize a raw transactions file to the generic CSV
  simulate   generate a synthetic cohort with known (lam, mu) truth
  fit-mcmc   Gibbs-sample posterior mean (lam, mu) per customer
  train-nn   fit the surrogate network on summaries + labels
  predict    forecast a holdout period from a model or a labels file
  evaluate   score forecast CSVs against observed holdout counts
  run        the whole pipeline from a config file

Stage seeds inside `run` derive from the global seed; the same artifacts
can be reproduced stage by stage with explicitly passed seeds.
"""

import argparse
import os
import sys

from . import config as config_mod
from . import data, experiment, forecast, gibbs, network, simulate


def _require(path):
    if not os.path.exists(path):
        raise ValueError(f"missing expected file: {path}")
    return path


def _align_labels(table, ids, lam, mu, path):
    """Reorder a labels file to the summaries' customer order."""
    index = {cid: i for i, cid in enumerate(ids)}
    if len(index) != len(ids):
        raise ValueError(f"{path}: duplicate customer ids")
    missing = [cid for cid in table.customer_ids if cid not in index]
    if missing or len(ids) != len(table):
        raise ValueError(
            f"{path}: label customers do not match the summaries "
            f"({len(missing)} missing, {len(ids)} labeled, {len(table)} summarized)")
    order = [index[cid] for cid in table.customer_ids]
    return lam[order], mu[order]


def cmd_ingest(args):
    _require(args.input)
    if args.format == "cdnow":
        log = data.ingest_cdnow(args.input)
    else:
        log = data.ingest_csv(args.input)
    if args.merge_same_day:
        log = data.merge_same_day(log)
    data.write_transactions_csv(args.out, log)
    print(f"{len(log.records)} records, {len(log.customer_ids())} customers, "
          f"{log.start_date} .. {log.end_date} -> {args.out}")
    return 0


def cmd_simulate(args):
    hyper = gibbs.HyperParams(r=args.r, alpha=args.alpha, s=args.s, beta=args.beta)
    cohort = simulate.make_cohort(
        args.n, args.seed, hyper=hyper, total_weeks=args.weeks,
        acquisition_weeks=args.acquisition_weeks)
    os.makedirs(args.out, exist_ok=True)
    tx_path = os.path.join(args.out, "transactions.csv")
    data.write_transactions_csv(tx_path, cohort.log)
    truth_path = os.path.join(args.out, "truth.csv")
    gibbs.write_labels_csv(truth_path, cohort.customer_ids, cohort.lam, cohort.mu)
    print(f"{args.n} customers, {len(cohort.log.records)} transactions "
          f"-> {tx_path}, truth -> {truth_path}")
    return 0


def cmd_fit_mcmc(args):
    table = data.CalibrationTable.from_csv(_require(args.summaries))
    cfg = gibbs.ChainConfig(sweeps=args.sweeps, burn_in=args.burn_in,
                            thin=args.thin, seed=args.seed,
                            keep_hyper_trace=args.trace is not None)
    post = gibbs.run_chain(table, cfg)
    gibbs.write_labels_csv(args.out, post.customer_ids,
                           post.mean_lambda, post.mean_mu)
    if args.trace is not None:
        gibbs.write_hyper_trace_csv(args.trace, post.hyper_trace)
    h = post.hyper_mean
    print(f"{len(table)} customers -> {args.out}  "
          f"posterior mean (r, alpha, s, beta) = "
          f"({h.r:.4f}, {h.alpha:.4f}, {h.s:.4f}, {h.beta:.4f})")
    return 0


def cmd_train_nn(args):
    table = data.CalibrationTable.from_csv(_require(args.summaries))
    ids, lam, mu = gibbs.read_labels_csv(_require(args.labels))
    lam, mu = _align_labels(table, ids, lam, mu, args.labels)
    spec = network.NetworkSpec(
        input_dim=table.features().shape[1],
        hidden_layers=args.hidden_layers, hidden_width=args.hidden_width,
        dropout_p=args.dropout)
    cfg = network.TrainingConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, seed=args.seed,
        early_stop_patience=args.patience,
        validation_fraction=args.validation_fraction)
    w, scaler, history = network.train(
        table, lam, mu, cfg, args.loss, spec=spec,
        ratio_interpretation=args.ratio_interpretation)
    network.save_model(args.out, spec, w, scaler,
                       meta={"loss": args.loss,
                             "ratio_interpretation": args.ratio_interpretation,
                             "epochs_run": len(history)})
    if args.history is not None:
        network.write_history_csv(args.history, history)
    last = history[-1] if history else (None, float("nan"), float("nan"))
    print(f"loss {args.loss}: {len(history)} epochs, "
          f"final train {last[1]:.6g}, val {last[2]:.6g} -> {args.out}")
    return 0


def cmd_predict(args):
    table = data.CalibrationTable.from_csv(_require(args.summaries))
    if args.model is not None:
        _, w, scaler, _ = network.load_model(_require(args.model))
        lam, mu = network.predict_params(table, w, scaler)
    else:
        ids, lam, mu = gibbs.read_labels_csv(_require(args.labels))
        lam, mu = _align_labels(table, ids, lam, mu, args.labels)
    fc = forecast.make_forecast(table, lam, mu, args.horizon,
                                threshold=args.threshold,
                                rounding=args.rounding)
    forecast.write_forecast_csv(args.out, fc)
    print(f"{len(fc)} customers, {int(fc.count_pred.sum())} predicted purchases, "
          f"{int(fc.inactive_pred.sum())} predicted inactive -> {args.out}")
    return 0


def cmd_evaluate(args):
    table = data.CalibrationTable.from_csv(_require(args.summaries))
    forecasts = {}
    for item in args.forecast:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ValueError(f"--forecast expects name=path, got {item!r}")
        fc = forecast.read_forecast_csv(_require(path))
        if list(fc.customer_ids) != list(table.customer_ids):
            raise ValueError(
                f"{path}: forecast customers do not match the summaries")
        forecasts[name] = fc
    if args.baseline is not None and args.baseline not in forecasts:
        raise ValueError(f"baseline {args.baseline!r} not among the forecasts")
    os.makedirs(args.out, exist_ok=True)
    reports = experiment.evaluate_forecasts(
        table.holdout_count, forecasts, args.baseline, args.cap)
    written = experiment.write_metric_tables(
        args.out, reports, table.holdout_count, args.cap)
    for rep in reports:
        cons = "" if rep.consistency is None else f", consistency {rep.consistency:.4f}"
        print(f"{rep.model}: accuracy {rep.inactive_accuracy:.4f}, "
              f"multi-accuracy {rep.multi_accuracy:.4f}, mae {rep.mae:.4f}, "
              f"purchases {rep.total_purchases:.0f}{cons}")
    print(f"wrote {', '.join(written)} to {args.out}")
    return 0


def cmd_run(args):
    cfg = config_mod.parse_config(_require(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.loss:
        cfg.losses = tuple(args.loss)
    if args.threshold is not None:
        cfg.threshold = args.threshold
    if args.rounding is not None:
        cfg.rounding = args.rounding
    if args.cap is not None:
        cfg.cap = args.cap
    _require(cfg.dataset)
    result = experiment.run_experiment(cfg)
    for rep in result.reports:
        print(f"{rep.model}: accuracy {rep.inactive_accuracy:.4f}, "
              f"mae {rep.mae:.4f}, purchases {rep.total_purchases:.0f}")
    print(f"wrote {len(result.manifest['artifacts'])} artifacts to {result.outdir}")
    return result.status


def build_parser():
    parser = argparse.ArgumentParser(
        prog="paretonbd",
        description="Pareto/NBD parameter estimation with a neural surrogate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize a raw transactions file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "cdnow"), default="csv")
    p.add_argument("--merge-same-day", action="store_true")
    p.add_argument("--out", required=True, help="output transactions CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weeks", type=int, default=104)
    p.add_argument("--acquisition-weeks", type=int, default=26)
    p.add_argument("--r", type=float, default=simulate.DEFAULT_HYPER.r)
    p.add_argument("--alpha", type=float, default=simulate.DEFAULT_HYPER.alpha)
    p.add_argument("--s", type=float, default=simulate.DEFAULT_HYPER.s)
    p.add_argument("--beta", type=float, default=simulate.DEFAULT_HYPER.beta)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-mcmc", help="Gibbs-sample (lam, mu) posteriors")
    p.add_argument("--summaries", required=True)
    p.add_argument("--sweeps", type=int, default=4000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="optional hyperparameter trace CSV")
    p.add_argument("--out", required=True, help="output labels CSV")
    p.set_defaults(func=cmd_fit_mcmc)

    p = sub.add_parser("train-nn", help="train the surrogate network")
    p.add_argument("--summaries", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--loss", choices=network.LOSS_KINDS, required=True)
    p.add_argument("--ratio-interpretation",
                   choices=network.RATIO_INTERPRETATIONS, default="weighted_nll")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--hidden-layers", type=int, default=2)
    p.add_argument("--hidden-width", type=int, default=20)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--history", help="optional training history CSV")
    p.add_argument("--out", required=True, help="output model JSON")
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("predict", help="forecast the holdout period")
    p.add_argument("--summaries", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model JSON from train-nn")
    src.add_argument("--labels", help="labels CSV with explicit (lam, mu)")
    p.add_argument("--horizon", type=float, required=True, help="weeks")
    p.add_argument("--threshold", type=float, default=forecast.DEFAULT_THRESHOLD)
    p.add_argument("--rounding", choices=forecast.ROUNDING_MODES,
                   default="half_away")
    p.add_argument("--out", required=True, help="output forecast CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score forecasts against holdout truth")
    p.add_argument("--summaries", required=True,
                   help="summaries CSV carrying holdout_count")
    p.add_argument("--forecast", action="append", required=True,
                   metavar="NAME=PATH", help="repeatable")
    p.add_argument("--baseline", help="forecast name anchoring consistency")
    p.add_argument("--cap", type=int, default=7)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", action="append", choices=network.LOSS_KINDS,
                   help="repeatable; overrides the configured loss list")
    p.add_argument("--threshold", type=float)
    p.add_argument("--rounding", choices=forecast.ROUNDING_MODES)
    p.add_argument("--cap", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except experiment.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
