"""Command-line surface tying the pipeline together.

Subcommands: ``gen-data``, ``train``, ``finetune``, ``evaluate``,
``correlate``, ``gradcheck``.  Configuration comes from an optional
`key = value` file (``#`` comments allowed) overridden by flags; unknown
keys are rejected by name.  Every run writes its fully resolved config next
to its outputs, and all output filenames embed the first 8 hex digits of a
stable hash of that resolved config, so a run can always be reproduced from
the snapshot alone.

Exit codes: 0 success, 2 configuration/usage errors, 3 numerical
divergence (the last good checkpoint is still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .analysis import correlate, report_csv
from .autodiff import grad_check
from .corpus import save_corpus
from .probloss import ProbSequence, batch_loss
from .seq2seq import load_checkpoint, save_checkpoint
from .training import (
    DivergenceError,
    TrainConfig,
    corpus_from_config,
    curve_csv,
    evaluate_model,
    finetune,
    pretrain_mle,
    rng_streams,
)

__all__ = ["main"]

GRADCHECK_TOLERANCE = 1e-4


class CliError(Exception):
    """Anything that should terminate with exit code 2 and a message."""


def _parse_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise CliError(f"cannot read config file {path}: {err}") from err
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _resolve_config(args) -> TrainConfig:
    values = {}
    if args.config:
        values.update(_parse_config_file(args.config))
    for name in ("task", "size", "seed", "epochs", "objective", "decoding",
                 "start", "checkpoint", "n_samples", "instances"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    try:
        return TrainConfig.from_mapping(values)
    except (ValueError, TypeError) as err:
        raise CliError(f"bad configuration: {err}") from err


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("NGRAMGRAD_OUT", "runs")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_snapshot(config: TrainConfig, out: Path, prefix: str) -> Path:
    path = out / f"{prefix}-{config.fingerprint()}.config"
    path.write_text("\n".join(sorted(config.as_lines())) + "\n")
    return path


def _load_model(config: TrainConfig, path: str, key: str):
    if not path:
        raise CliError(f"this command requires a model; set the {key!r} key or --{key} flag")
    try:
        return load_checkpoint(path, expect_fingerprint=config.model_fingerprint())
    except OSError as err:
        raise CliError(f"cannot read checkpoint {path}: {err}") from err
    except ValueError as err:
        raise CliError(str(err)) from err


# -- subcommand handlers ----------------------------------------------------------


def cmd_gen_data(config: TrainConfig, out: Path) -> int:
    corp = corpus_from_config(config)
    stem = f"data-{config.fingerprint()}"
    paths = save_corpus(corp, out, stem)
    _write_snapshot(config, out, "data")
    print(f"wrote {len(corp)} {config.task} pairs:")
    for key in ("src", "tgt", "src_vocab", "tgt_vocab"):
        print(f"  {paths[key]}")
    return 0


def _finish_training(result, config, out, prefix):
    ckpt = out / f"{prefix}-{config.fingerprint()}.ckpt"
    curve = out / f"{prefix}-{config.fingerprint()}.curve.csv"
    save_checkpoint(ckpt, result.params, config.model_fingerprint(), result.state)
    curve.write_text(curve_csv(result.curve))
    _write_snapshot(config, out, prefix)
    return ckpt, curve


def cmd_train(config: TrainConfig, out: Path) -> int:
    if config.objective != "ce":
        raise CliError(
            f"train minimizes cross-entropy; objective {config.objective!r} belongs to finetune"
        )
    try:
        result = pretrain_mle(config)
    except DivergenceError as err:
        return _diverged(err, config, out, "mle")
    ckpt, curve = _finish_training(result, config, out, "mle")
    print(f"best dev corpus BLEU {result.best_dev!r}")
    print(f"checkpoint: {ckpt}")
    print(f"curve: {curve}")
    return 0


def cmd_finetune(config: TrainConfig, out: Path) -> int:
    if config.objective == "ce":
        raise CliError("finetune needs a probabilistic objective (p_bleu, p_gleu, p_pN)")
    corp = corpus_from_config(config)
    start_params, start_state, _ = _load_model(config, config.start, "start")
    try:
        result = finetune(config, corp, start_params, start_state)
    except DivergenceError as err:
        return _diverged(err, config, out, "ft")
    except ValueError as err:
        raise CliError(str(err)) from err
    ckpt, curve = _finish_training(result, config, out, "ft")
    print(f"best dev corpus BLEU {result.best_dev!r} ({result.skipped} degenerate sentences skipped)")
    print(f"checkpoint: {ckpt}")
    print(f"curve: {curve}")
    return 0


def _diverged(err: DivergenceError, config, out, prefix) -> int:
    print(f"diverged: {err}", file=sys.stderr)
    if err.result is not None:
        ckpt, _ = _finish_training(err.result, config, out, prefix)
        print(f"last good checkpoint retained: {ckpt}", file=sys.stderr)
    return 3


def cmd_evaluate(config: TrainConfig, out: Path) -> int:
    corp = corpus_from_config(config)
    params, _, _ = _load_model(config, config.checkpoint, "checkpoint")
    try:
        score, records = evaluate_model(params, corp.split("test"))
    except ValueError as err:
        raise CliError(str(err)) from err
    path = out / f"eval-{config.fingerprint()}.csv"
    lines = ["id,bleu,gleu,hyp,ref"]
    vocab = corp.tgt_vocab
    for r in records:
        hyp = " ".join(vocab.decode(r["hyp"]))
        ref = " ".join(vocab.decode(r["ref"]))
        lines.append(f"{r['id']},{r['bleu']!r},{r['gleu']!r},{hyp},{ref}")
    path.write_text("\n".join(lines) + "\n")
    _write_snapshot(config, out, "eval")
    print(f"test corpus BLEU {score!r} over {len(records)} sentences")
    print(f"records: {path}")
    return 0


def cmd_correlate(config: TrainConfig, out: Path) -> int:
    corp = corpus_from_config(config)
    params, _, _ = _load_model(config, config.checkpoint, "checkpoint")
    try:
        report = correlate(
            params, corp.split("train"), config.n_samples,
            rng_streams(config.seed)["analysis"],
        )
    except ValueError as err:
        raise CliError(str(err)) from err
    path = out / f"corr-{config.fingerprint()}.csv"
    path.write_text(report_csv(report))
    _write_snapshot(config, out, "corr")
    print(f"pearson r = {report.coefficient:.4f} over {report.n} samples")
    print(f"scatter: {path}")
    return 0


def cmd_gradcheck(config: TrainConfig, out: Path) -> int:
    rng = rng_streams(config.seed)["analysis"]
    worst = 0.0
    for objective in ("p_bleu", "p_gleu", "p_p2"):
        obj_worst = 0.0
        for _ in range(config.instances):
            hyp_len = int(rng.integers(1, 9))
            hyp = [int(t) for t in rng.integers(0, 10, size=hyp_len)]
            ref = [int(t) for t in rng.integers(0, 10, size=rng.integers(1, 9))]
            probs = rng.uniform(0.15, 0.85, size=hyp_len)

            def fn(v):
                return batch_loss([(ProbSequence.from_vector(hyp, v), ref)], objective)[0]

            obj_worst = max(obj_worst, grad_check(fn, probs, step=1e-5))
        print(f"{objective}: max relative error {obj_worst:.3e} over {config.instances} instances")
        worst = max(worst, obj_worst)
    _write_snapshot(config, out, "gradcheck")
    print(f"max relative error {worst:.3e}")
    return 0 if worst <= GRADCHECK_TOLERANCE else 1


# -- entry point -------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngramgrad",
        description="differentiable n-gram training objectives: data, training, analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "gen-data": ("generate a synthetic parallel corpus", cmd_gen_data),
        "train": ("MLE-pretrain a model with teacher forcing", cmd_train),
        "finetune": ("refine a checkpoint with a probabilistic n-gram objective", cmd_finetune),
        "evaluate": ("greedy-decode the test split and report corpus BLEU", cmd_evaluate),
        "correlate": ("Pearson correlation of GLEU vs its differentiable surrogate", cmd_correlate),
        "gradcheck": ("verify objective gradients against finite differences", cmd_gradcheck),
    }
    for name, (help_text, handler) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (default $NGRAMGRAD_OUT or ./runs)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--task")
        p.add_argument("--size")
        p.add_argument("--seed")
        p.add_argument("--epochs")
        p.add_argument("--objective")
        p.add_argument("--decoding")
        p.add_argument("--start", help="checkpoint to finetune from")
        p.add_argument("--checkpoint", help="checkpoint to evaluate/correlate")
        p.add_argument("--n-samples", dest="n_samples")
        p.add_argument("--instances")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        return args.handler(config, _out_dir(args))
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
