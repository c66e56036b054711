"""Command-line entry points for training, evaluation, and measurement runs.

Every command is a pure function of (config file, flags, input files, seed):
it writes a CSV report plus an aligned text table, both embedding the fully
resolved configuration, and exits nonzero on any error. ``train`` also
writes a model checkpoint.
"""

import argparse
import sys
from dataclasses import replace

from .blackbox import METHODS, sign_consistency_experiment
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DATASETS, KEY_DOCS, RunConfigError, build_runconfig
from .defense import NEIGHBOR_METHODS, VARIANTS, PostTrainPipeline
from .harness import (
    EvalReport,
    VariantResult,
    ablation_suite,
    evaluate,
    materialize_dataset,
    neighbor_accuracy,
    test_subset,
    timing_report,
    train_base,
)
from .reports import write_report
from .rng import derive_seed

# (flag, config key, help); every flag simply overrides one config key.
_FLAG_KEYS = [
    ("--dataset", "dataset", "dataset kind: " + " | ".join(DATASETS)),
    ("--data-dir", "data_dir", "root directory for idx files"),
    ("--seed", "seed", "global seed"),
    ("--subset", "subset", "number of test inputs evaluated"),
    ("--threads", "threads", "worker threads for per-input evaluation"),
    ("--eps", "eps", "attack epsilon"),
    ("--alpha", "alpha", "attack step size"),
    ("--steps", "steps", "attack step count"),
    ("--epochs", "epochs", "base-training epochs"),
    ("--batch-size", "batch_size", "base-training minibatch size"),
    ("--train-method", "train_method", "base-training perturbation: none | fgsm | pgd"),
    ("--train-lr", "train_lr", "base-training learning rate"),
    ("--hidden", "hidden", "comma-separated hidden layer sizes"),
    ("--variant", "pt_variant", "adaptation variant: " + " | ".join(VARIANTS)),
    ("--pt-iters", "pt_iters", "adaptation iteration count"),
    ("--pt-batch", "pt_batch", "adaptation batch size"),
    ("--pt-lr", "pt_lr", "adaptation learning rate"),
    ("--pt-momentum", "pt_momentum", "adaptation momentum"),
    ("--method", "pt_neighbor", "neighbor search method: " + " | ".join(NEIGHBOR_METHODS)),
    ("--n-images", "n_images", "gradient-consistency image count"),
    ("--grad-method", "grad_method", "gradient probe: " + " | ".join(METHODS)),
]


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable); see --help-config",
    )
    for flag, key, help_text in _FLAG_KEYS:
        parser.add_argument(flag, dest=f"cfg_{key}", metavar=key.upper(), help=help_text)
    parser.add_argument(
        "--report",
        default=None,
        help="output path prefix for the .csv and .txt report",
    )


def _overrides(args) -> dict:
    values = {}
    for item in args.set:
        if "=" not in item:
            raise RunConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    for _, key, _ in _FLAG_KEYS:
        flag_value = getattr(args, f"cfg_{key}", None)
        if flag_value is not None:
            values[key] = flag_value
    static = getattr(args, "cfg_static", None)
    if static is not None:
        values["static"] = static
    return values


def _runconfig(args):
    return build_runconfig(args.config, _overrides(args))


def _echo(rc, command: str, **extra) -> dict:
    values = {"command": command, **rc.echo()}
    values.update({k: str(v) for k, v in extra.items() if v is not None})
    return values


def _emit(args, command: str, echo: dict, report: EvalReport):
    header, rows = report.table()
    prefix = args.report or f"advpost-{command}"
    csv_path, txt_path = write_report(prefix, f"advpost {command}", echo, header, rows)
    sys.stdout.write(txt_path.read_text())
    print(f"wrote {csv_path} and {txt_path}")


def _load_model(rc, path):
    model = load_checkpoint(path)
    train_ds = materialize_dataset(rc.train_source())
    if model.input_dim != train_ds.input_dim:
        raise RunConfigError(
            f"checkpoint input dim {model.input_dim} does not match dataset "
            f"input dim {train_ds.input_dim}"
        )
    return model, train_ds


def cmd_train(args) -> int:
    rc = _runconfig(args)
    train_ds = materialize_dataset(rc.train_source())
    model = train_base(train_ds, rc.recipe())
    save_checkpoint(model, {"config": rc.echo()}, args.out)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    report = evaluate(model, examples, rc.attack(), seed=rc.seed())
    _emit(args, "train", _echo(rc, "train", out=args.out), report)
    return 0


def cmd_attack_eval(args) -> int:
    rc = _runconfig(args)
    model, _ = _load_model(rc, args.model)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    report = evaluate(model, examples, rc.attack(), seed=rc.seed())
    _emit(args, "attack-eval", _echo(rc, "attack-eval", model=args.model), report)
    return 0


def cmd_posttrain_eval(args) -> int:
    rc = _runconfig(args)
    model, train_ds = _load_model(rc, args.model)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    report = evaluate(
        model,
        examples,
        rc.attack(),
        rc.post_config(),
        dataset=train_ds,
        seed=rc.seed(),
        threads=rc.threads(),
    )
    _emit(args, "posttrain-eval", _echo(rc, "posttrain-eval", model=args.model), report)
    return 0


def cmd_neighbor_eval(args) -> int:
    rc = _runconfig(args)
    model, _ = _load_model(rc, args.model)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    method = rc.values["pt_neighbor"]
    value = neighbor_accuracy(model, examples, rc.attack(), method)
    report = EvalReport(
        rows=[
            VariantResult(
                name=f"neighbor_{method}",
                n_inputs=len(examples),
                neighbor_accuracy=value,
            )
        ],
        config={},
    )
    _emit(args, "neighbor-eval", _echo(rc, "neighbor-eval", model=args.model), report)
    return 0


def cmd_ablation(args) -> int:
    rc = _runconfig(args)
    model, _ = _load_model(rc, args.model)
    report = ablation_suite(rc.experiment(), model=model, threads=rc.threads())
    _emit(args, "ablation", _echo(rc, "ablation", model=args.model), report)
    return 0


def cmd_grad_consistency(args) -> int:
    rc = _runconfig(args)
    model, train_ds = _load_model(rc, args.model)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    pipeline = PostTrainPipeline(
        model, train_ds, rc.post_config(), enabled=not rc.static()
    )
    result = sign_consistency_experiment(
        pipeline,
        examples,
        rc.n_images(),
        rc.grad_method(),
        seed=derive_seed(rc.seed(), 9),
    )
    echo = _echo(rc, "grad-consistency", model=args.model)
    header = [
        "method",
        "disagreement_rate",
        "n_images",
        "n_comparisons",
        "n_invalid",
        "seed",
    ]
    rows = [[
        result.method,
        result.disagreement_rate,
        result.n_images,
        result.n_comparisons,
        result.n_invalid,
        result.seed,
    ]]
    prefix = args.report or "advpost-grad-consistency"
    csv_path, txt_path = write_report(
        prefix, "advpost grad-consistency", echo, header, rows
    )
    sys.stdout.write(txt_path.read_text())
    print(f"wrote {csv_path} and {txt_path}")
    return 0


def cmd_timing(args) -> int:
    rc = _runconfig(args)
    model, train_ds = _load_model(rc, args.model)
    examples = test_subset(rc.test_source(), rc.subset(), rc.seed())
    rows = []
    bare = timing_report(model, examples)
    rows.append(VariantResult(name="bare", n_inputs=bare.n, timing=bare))
    for variant in ("fixed", "fast", "pgd"):
        pipeline = PostTrainPipeline(
            model, train_ds, replace(rc.post_config(), variant=variant)
        )
        stats = timing_report(pipeline, examples)
        rows.append(VariantResult(name=f"post_{variant}", n_inputs=stats.n, timing=stats))
    report = EvalReport(rows=rows, config={})
    _emit(args, "timing", _echo(rc, "timing", model=args.model), report)
    return 0


def _help_config() -> str:
    width = max(len(k) for k in KEY_DOCS)
    lines = ["configuration keys (defaults depend on the dataset kind):"]
    for key, doc in KEY_DOCS.items():
        lines.append(f"  {key.ljust(width)}  {doc}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advpost",
        description=(
            "Inference-stage post-training defense experiments: train base "
            "models, attack them, adapt per input, and measure the result."
        ),
        epilog=_help_config(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("train", cmd_train, "train a base model and write a checkpoint"),
        ("attack-eval", cmd_attack_eval, "natural and robust accuracy of a checkpoint"),
        ("posttrain-eval", cmd_posttrain_eval, "accuracy with per-input adaptation"),
        ("neighbor-eval", cmd_neighbor_eval, "probability the truth is in the restricted pair"),
        ("ablation", cmd_ablation, "compare adaptation data compositions"),
        ("grad-consistency", cmd_grad_consistency, "sign stability of repeated gradient queries"),
        ("timing", cmd_timing, "seconds per image for each variant"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "train":
            p.add_argument("--out", required=True, help="checkpoint output path")
        else:
            p.add_argument("--model", required=True, help="checkpoint to evaluate")
        if name == "grad-consistency":
            p.add_argument(
                "--static",
                action="store_const",
                const="yes",
                dest="cfg_static",
                help="disable adaptation between queries",
            )
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # argparse errors exit(2) before reaching here
        provenance = type(exc).__module__ + "." + type(exc).__qualname__
        print(f"advpost {args.command}: error [{provenance}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
