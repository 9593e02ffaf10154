"""Command-line interface.

Subcommands: preprocess, train, evaluate, ablate, synth.  Hyperparameters
come from ``--config`` (key = value file) with flags taking precedence;
defaults reproduce the published setup.  Each failing module maps to its
own nonzero exit code.
"""

import argparse
import os
import sys

import numpy as np

from . import checkpoint as ckpt_mod
from . import evaluation, model, synth, training
from .artifacts import check_params_match, load_dataset, preprocess
from .config import load_config
from .errors import HgtulError

IO_EXIT_CODE = 11


def exit_code_for(exc):
    if isinstance(exc, HgtulError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return IO_EXIT_CODE
    return 1


def _add_common(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="training / init seed")
    parser.add_argument("--split-seed", type=int, dest="split_seed")
    parser.add_argument("--variant", choices=list(model.VARIANTS))
    parser.add_argument("--repeat", type=int)
    parser.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="hgtul")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="check-ins -> training artifacts")
    p.add_argument("--input", help="check-in TSV (overrides config)")
    p.add_argument("--format", choices=["canonical_tsv", "gowalla_raw", "foursquare_raw"])
    _add_common(p)

    p = sub.add_parser("train", help="train on preprocessed artifacts")
    p.add_argument("--data", required=True, help="preprocess output directory")
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["test", "valid"], default="test")
    _add_common(p)

    p = sub.add_parser("ablate", help="train + evaluate one or all variants")
    p.add_argument("--data", required=True)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic check-in corpus")
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--pois", type=int, default=60)
    p.add_argument("--weeks", type=int, default=12)
    p.add_argument("--checkins-min", type=int, default=4, dest="checkins_min")
    p.add_argument("--checkins-max", type=int, default=12, dest="checkins_max")
    p.add_argument("--concentration", type=float, default=9.0)
    p.add_argument("--imbalance", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    return parser


def _config_from(args):
    overrides = {}
    for key in ("seed", "split_seed", "variant", "repeat", "input", "format"):
        if hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    return load_config(getattr(args, "config", None), overrides)


def cmd_preprocess(args):
    cfg = _config_from(args)
    if not cfg.input:
        raise HgtulError("preprocess needs --input or an input= config entry")
    stats = preprocess(cfg.input, args.out, cfg)
    print(
        f"users={stats['users']} train/valid/test="
        f"{stats['train']}/{stats['valid']}/{stats['test']} "
        f"pois={stats['pois']} length=[{stats['min_length']}, {stats['max_length']}]"
    )
    for key, val in stats.items():
        print(f"  {key} = {val}")
    return 0


def _train_once(dataset, hg, cfg, rng, variant):
    result = training.train(dataset, hg, cfg.train_config(), variant=variant, rng=rng)
    return result


def _repeat_rng(seed, r):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def cmd_train(args):
    cfg = _config_from(args)
    dataset = load_dataset(args.data)
    hg = dataset.hypergraph()
    os.makedirs(args.out, exist_ok=True)
    best_accs = []
    for r in range(cfg.repeat):
        result = _train_once(dataset, hg, cfg, _repeat_rng(cfg.seed, r), cfg.variant)
        suffix = f"_r{r}" if cfg.repeat > 1 else ""
        ckpt_mod.save_tensors(
            os.path.join(args.out, f"checkpoint{suffix}.bin"),
            result.params.named_tensors(),
        )
        training.write_history(
            os.path.join(args.out, f"history{suffix}.tsv"), result.history
        )
        best_accs.append(result.best_valid_acc1)
        print(
            f"repeat {r}: best epoch {result.best_epoch}, "
            f"valid acc@1 {result.best_valid_acc1:.4f}"
        )
    if cfg.repeat > 1:
        with open(os.path.join(args.out, "summary.tsv"), "w", encoding="utf-8") as fh:
            fh.write(f"valid_acc1_mean\t{np.mean(best_accs):.4f}\n")
            fh.write(f"valid_acc1_std\t{np.std(best_accs):.4f}\n")
    return 0


def _load_params(path, dataset, hg, cfg):
    params = model.init_model_params(
        n_pois=hg.n_pois,
        n_trajs=hg.n_trajs,
        n_geo=dataset.n_geo,
        n_slots=dataset.n_slots,
        n_days=dataset.n_days,
        n_users=dataset.n_users,
        dim=cfg.dim,
        n_layers=cfg.layers,
        rng=np.random.default_rng(0),
        dropout_rate=cfg.dropout,
    )
    tensors = ckpt_mod.load_tensors(path)
    qs = tensors.get("cls_w")
    if qs is not None and qs.shape[0] != dataset.n_users:
        from .errors import EvaluationError

        raise EvaluationError(
            f"checkpoint user count {qs.shape[0]} != artifacts {dataset.n_users}"
        )
    ckpt_mod.restore_into(params, tensors)
    check_params_match(params, dataset, hg)
    return params


def _evaluate(params, dataset, hg, variant, split):
    ids = dataset.test_ids if split == "test" else dataset.valid_ids
    scores = model.predict_scores(params, hg, dataset.features, ids, variant=variant)
    pred = evaluation.PredictionMatrix(scores=scores, truth=dataset.labels[ids])
    return evaluation.evaluate_predictions(pred, dataset.train_counts, variant_id=variant)


def cmd_evaluate(args):
    cfg = _config_from(args)
    dataset = load_dataset(args.data)
    hg = dataset.hypergraph()
    params = _load_params(args.checkpoint, dataset, hg, cfg)
    report = _evaluate(params, dataset, hg, cfg.variant, args.split)
    os.makedirs(args.out, exist_ok=True)
    suffix = "" if args.split == "test" else f"_{args.split}"
    evaluation.write_report(
        report,
        os.path.join(args.out, f"report{suffix}.tsv"),
        os.path.join(args.out, f"report{suffix}.txt"),
    )
    for metric, group, value in report.lines():
        print(f"{metric}\t{group}\t{value:.4f}")
    return 0


def cmd_ablate(args):
    cfg = _config_from(args)
    dataset = load_dataset(args.data)
    hg = dataset.hypergraph()
    os.makedirs(args.out, exist_ok=True)
    variants = [cfg.variant] if args.variant else list(model.VARIANTS)
    summary = []
    for variant in variants:
        result = _train_once(dataset, hg, cfg, _repeat_rng(cfg.seed, 0), variant)
        ckpt_mod.save_tensors(
            os.path.join(args.out, f"checkpoint_{variant}.bin"),
            result.params.named_tensors(),
        )
        training.write_history(
            os.path.join(args.out, f"history_{variant}.tsv"), result.history
        )
        report = _evaluate(result.params, dataset, hg, variant, "test")
        evaluation.write_report(
            report,
            os.path.join(args.out, f"report_{variant}.tsv"),
            os.path.join(args.out, f"report_{variant}.txt"),
        )
        summary.append((variant, report))
        print(
            f"{variant}: acc@1 {report.acc[1]:.4f} macro_f1 {report.macro_f1:.4f}"
        )
    with open(os.path.join(args.out, "ablation.tsv"), "w", encoding="utf-8") as fh:
        for variant, report in summary:
            fh.write(
                f"{variant}\t{report.acc[1]:.4f}\t{report.acc[5]:.4f}\t"
                f"{report.macro_f1:.4f}\n"
            )
    return 0


def cmd_synth(args):
    cfg = synth.SynthConfig(
        n_users=args.users,
        n_pois=args.pois,
        weeks=args.weeks,
        checkins_min=args.checkins_min,
        checkins_max=args.checkins_max,
        preference_concentration=args.concentration,
        imbalance_exponent=args.imbalance,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    tsv = os.path.join(args.out, "checkins.tsv")
    truth = os.path.join(args.out, "truth.tsv")
    checkins, _ = synth.write_corpus(cfg, tsv, truth)
    print(f"wrote {len(checkins)} check-ins to {tsv}")
    return 0


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (HgtulError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
