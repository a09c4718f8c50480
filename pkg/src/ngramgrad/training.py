"""Training loops: MLE pretraining, sequence-level finetuning, optimizers.

The pipeline mirrors the two-phase recipe: first minimize cross-entropy
with teacher forcing (dropout on), then refine the same parameters with a
differentiable n-gram objective under either greedy feedback (the regime
that matches inference) or teacher forcing.  Both phases evaluate dev
corpus-BLEU on a fixed cadence, keep the best-dev snapshot, and abort on
non-finite numbers while retaining the last good checkpoint.

Every random draw anywhere in a run — corpus, initialization, shuffling,
dropout, sampling — descends from the single config seed through named
SeedSequence spawn streams, which is what makes reruns bit-identical.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from . import corpus as corpus_mod
from . import metrics
from .corpus import EOS, ParallelCorpus, batch_iter, gen_synthetic
from .probloss import ProbSequence, batch_loss
from .seq2seq import ModelParams, cross_entropy_loss, decode_greedy, \
    decode_teacher_forced, default_max_len, encode, init_params

__all__ = [
    "TrainConfig",
    "TrainResult",
    "DivergenceError",
    "CURVE_HEADER",
    "rng_streams",
    "corpus_from_config",
    "make_optimizer_state",
    "optimizer_step",
    "clip_gradients",
    "pretrain_mle",
    "finetune",
    "evaluate_model",
    "dev_corpus_bleu",
    "curve_csv",
]

CURVE_HEADER = "step,epoch,split,metric,value"

# config keys whose values determine corpus identity and parameter shapes;
# their hash is stamped into checkpoints so a mismatched evaluate fails fast
MODEL_KEYS = (
    "task", "size", "len_min", "len_max", "vocab_size",
    "emb_size", "hidden_size", "attn_size", "seed",
)


class DivergenceError(RuntimeError):
    """Non-finite loss or gradient; ``result`` holds the last good snapshot."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class TrainConfig:
    """Flat configuration for the whole pipeline.

    One schema serves every subcommand; keys irrelevant to a given command
    (e.g. ``n_samples`` during training) simply go unused.  Field types
    drive the parsing of `key = value` config text.
    """

    task: str = "copy"
    size: int = 2000
    len_min: int = 3
    len_max: int = 12
    vocab_size: int = 20
    emb_size: int = 32
    hidden_size: int = 64
    attn_size: int = 32
    batch_size: int = 40
    optimizer: str = "adadelta"
    lr: float = 0.2
    rho: float = 0.95
    eps: float = 1e-6
    objective: str = "ce"
    decoding: str = "greedy"
    epochs: int = 5
    seed: int = 0
    dropout: float = 0.5
    grad_clip: float = 5.0
    eval_every: float = 0.5
    pretrain_threshold: float = 0.5
    stop_at_dev_bleu: float = 0.0
    start: str = ""
    checkpoint: str = ""
    n_samples: int = 100
    instances: int = 20

    def __post_init__(self):
        if self.task not in corpus_mod.TASKS:
            raise ValueError(f"task must be one of {corpus_mod.TASKS}, got {self.task!r}")
        if self.optimizer not in ("sgd", "adadelta"):
            raise ValueError(f"optimizer must be sgd or adadelta, got {self.optimizer!r}")
        if self.decoding not in ("greedy", "teacher_forcing"):
            raise ValueError(
                f"decoding must be greedy or teacher_forcing, got {self.decoding!r}"
            )
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0,1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0,1), got {self.dropout}")
        if self.eval_every <= 0.0:
            raise ValueError(f"eval_every must be positive, got {self.eval_every}")
        if self.grad_clip <= 0.0:
            raise ValueError(f"grad_clip must be positive, got {self.grad_clip}")

    @classmethod
    def from_mapping(cls, mapping) -> "TrainConfig":
        """Build from a key -> value mapping, coercing string values.

        Unknown keys are an error (named in the message) rather than being
        silently ignored — typos in config files should not train models.
        """
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = types[key]
            if kind in ("int", int):
                kwargs[key] = int(raw)
            elif kind in ("float", float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def as_lines(self) -> list:
        """One ``key = value`` line per field, parseable as a config file.

        Strings are written bare (no quotes) so a saved snapshot feeds
        straight back into config loading; float formatting via str loses
        nothing in Python 3.
        """
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]

    def fingerprint(self) -> str:
        """First 8 hex digits of a stable hash of the full resolved config."""
        text = "\n".join(sorted(self.as_lines()))
        return hashlib.sha256(text.encode()).hexdigest()[:8]

    def model_fingerprint(self) -> str:
        """Hash over only the keys that pin corpus identity and model shape."""
        text = "\n".join(f"{k} = {getattr(self, k)}" for k in MODEL_KEYS)
        return hashlib.sha256(text.encode()).hexdigest()[:8]


@dataclass
class TrainResult:
    params: ModelParams
    state: dict
    curve: list
    best_dev: float
    skipped: int = 0


def rng_streams(seed: int) -> dict:
    """Named child generators spawned from the one config seed.

    The spawn order is fixed; consuming one stream never disturbs another,
    so e.g. the corpus is identical whether or not training follows.
    """
    root = np.random.SeedSequence(seed)
    names = ("corpus", "init", "mle", "finetune", "analysis")
    return dict(zip(names, map(np.random.default_rng, root.spawn(len(names)))))


def corpus_from_config(config: TrainConfig) -> ParallelCorpus:
    return gen_synthetic(
        config.task,
        config.size,
        (config.len_min, config.len_max),
        config.vocab_size,
        rng_streams(config.seed)["corpus"],
    )


# -- optimizers -----------------------------------------------------------------


def make_optimizer_state(params: ModelParams, kind: str) -> dict:
    if kind == "sgd":
        return {}
    if kind == "adadelta":
        state = {}
        for name, v in params.named():
            state[f"{name}.eg"] = np.zeros_like(v.data)  # decayed E[g²]
            state[f"{name}.ed"] = np.zeros_like(v.data)  # decayed E[Δ²]
        return state
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_step(
    params: ModelParams,
    state: dict,
    kind: str,
    lr: float = 0.2,
    rho: float = 0.95,
    eps: float = 1e-6,
) -> None:
    """Apply one update in place from the gradients sitting on the params.

    SGD: θ ← θ − lr·g.  Adadelta: accumulate E[g²] first, then
    Δ = −(√(E[Δ²]+ε)/√(E[g²]+ε))·g, accumulate E[Δ²], apply Δ.
    """
    for name, v in params.named():
        g = v.grad
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
        if kind == "sgd":
            v.data -= lr * g
        elif kind == "adadelta":
            eg, ed = state[f"{name}.eg"], state[f"{name}.ed"]
            eg *= rho
            eg += (1.0 - rho) * g * g
            delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
            ed *= rho
            ed += (1.0 - rho) * delta * delta
            v.data += delta
        else:
            raise ValueError(f"unknown optimizer {kind!r}")


def clip_gradients(params: ModelParams, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    total = 0.0
    for _, v in params.named():
        total += float(np.sum(v.grad * v.grad))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for _, v in params.named():
            v.grad *= scale
    return norm


# -- evaluation helpers -----------------------------------------------------------


def _greedy_hypothesis(src, params: ModelParams):
    outputs = decode_greedy(encode(src, params), default_max_len(len(src)), params)
    return [o.token for o in outputs], outputs


def dev_corpus_bleu(params: ModelParams, pairs) -> float:
    if not pairs:
        raise ValueError("cannot evaluate on an empty split")
    scored = [(_greedy_hypothesis(src, params)[0], tgt) for src, tgt in pairs]
    return metrics.corpus_bleu(scored)


def evaluate_model(params: ModelParams, pairs) -> tuple[float, list]:
    """Greedy-decode a split; returns (corpus BLEU, per-sentence records)."""
    if not pairs:
        raise ValueError("cannot evaluate on an empty split")
    records = []
    scored = []
    for i, (src, tgt) in enumerate(pairs):
        hyp, _ = _greedy_hypothesis(src, params)
        scored.append((hyp, tgt))
        records.append(
            {
                "id": i,
                "hyp": hyp,
                "ref": tgt,
                "bleu": metrics.bleu(hyp, tgt),
                "gleu": metrics.gleu(hyp, tgt),
            }
        )
    return metrics.corpus_bleu(scored), records


def curve_csv(rows) -> str:
    lines = [CURVE_HEADER]
    for step, epoch, split, metric, value in rows:
        lines.append(f"{step},{epoch!r},{split},{metric},{value!r}")
    return "\n".join(lines) + "\n"


# -- training loops ----------------------------------------------------------------


class _CurveTracker:
    """Shared eval-cadence bookkeeping for both training phases."""

    def __init__(self, params, dev_pairs, steps_per_epoch, eval_every):
        self.params = params
        self.dev_pairs = dev_pairs
        self.interval = max(1, round(steps_per_epoch * eval_every))
        self.steps_per_epoch = steps_per_epoch
        self.rows = []
        self.best_dev = -1.0
        self.best_arrays = None
        self.best_state = None
        self.loss_sum = 0.0
        self.loss_count = 0
        self.last_eval_step = -1

    def note_loss(self, value: float, count: int) -> None:
        self.loss_sum += value
        self.loss_count += count

    def due(self, step: int) -> bool:
        return step % self.interval == 0

    def evaluate(self, step: int, state: dict) -> float:
        if step == self.last_eval_step:
            return self.best_dev
        self.last_eval_step = step
        epoch = round(step / self.steps_per_epoch, 4)
        if self.loss_count:
            self.rows.append(
                (step, epoch, "train", "loss", self.loss_sum / self.loss_count)
            )
            self.loss_sum, self.loss_count = 0.0, 0
        dev = dev_corpus_bleu(self.params, self.dev_pairs)
        self.rows.append((step, epoch, "dev", "corpus_bleu", dev))
        if dev > self.best_dev:
            self.best_dev = dev
            self.best_arrays = self.params.copy_arrays()
            self.best_state = {k: a.copy() for k, a in state.items()}
        return dev

    def result(self, skipped: int = 0) -> TrainResult:
        if self.best_arrays is None:  # no eval ever ran
            return TrainResult(
                ModelParams.from_arrays(self.params.copy_arrays()),
                {}, self.rows, self.best_dev, skipped,
            )
        return TrainResult(
            ModelParams.from_arrays(self.best_arrays),
            self.best_state, self.rows, self.best_dev, skipped,
        )


def pretrain_mle(config: TrainConfig, corp: ParallelCorpus | None = None) -> TrainResult:
    """Phase one: teacher-forced cross-entropy training from fresh parameters.

    Evaluates dev corpus-BLEU on the configured cadence and returns the
    best-dev snapshot (parameters and optimizer state).  Raises
    DivergenceError — with the last good snapshot attached — if the loss or
    any gradient goes non-finite.
    """
    if corp is None:
        corp = corpus_from_config(config)
    rngs = rng_streams(config.seed)
    params = init_params(
        len(corp.src_vocab), len(corp.tgt_vocab),
        config.emb_size, config.hidden_size, config.attn_size,
        rngs["init"],
    )
    state = make_optimizer_state(params, config.optimizer)
    train_pairs = corp.split("train")
    tracker = _CurveTracker(
        params, corp.split("dev"),
        steps_per_epoch=max(1, -(-len(train_pairs) // config.batch_size)),
        eval_every=config.eval_every,
    )
    mle_rng = rngs["mle"]
    step = 0
    stop = False
    for _ in range(config.epochs):
        for batch in batch_iter(train_pairs, config.batch_size, seed=mle_rng):
            losses = []
            for src, tgt in batch.sentences():
                forced = tgt + [EOS]
                steps = decode_teacher_forced(
                    encode(src, params), forced, params,
                    dropout=config.dropout, rng=mle_rng,
                )
                losses.append(cross_entropy_loss(steps, forced))
            total = losses[0] if len(losses) == 1 else ad.sum_reduce(ad.stack(losses))
            value = total.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite training loss at step {step}", tracker.result()
                )
            total.backward()
            clip_gradients(params, config.grad_clip)
            try:
                optimizer_step(params, state, config.optimizer,
                               config.lr, config.rho, config.eps)
            except DivergenceError as err:
                err.result = tracker.result()
                raise
            params.zero_grads()
            step += 1
            tracker.note_loss(value, len(batch))
            if tracker.due(step):
                dev = tracker.evaluate(step, state)
                if config.stop_at_dev_bleu > 0 and dev >= config.stop_at_dev_bleu:
                    stop = True
                    break
        if stop:
            break
    if step > 0:
        tracker.evaluate(step, state)
    return tracker.result()


def finetune(
    config: TrainConfig,
    corp: ParallelCorpus,
    start_params: ModelParams,
    start_state: dict | None = None,
) -> TrainResult:
    """Phase two: minimize the negative probabilistic objective.

    ``config.decoding`` picks how hypotheses are produced: ``greedy`` feeds
    back argmax tokens (scores what inference would actually emit), while
    ``teacher_forcing`` scores the reference tokens' own probabilities.
    Dropout stays off.  The optimizer starts with fresh accumulators — the
    old ones describe cross-entropy gradient scales, not these.

    Requires the starting model to clear ``pretrain_threshold`` dev BLEU;
    finetuning a random-quality model amplifies garbage.
    """
    if config.objective == "ce":
        raise ValueError("objective 'ce' is pretraining; finetune needs p_bleu/p_gleu/p_pN")
    params = ModelParams.from_arrays(start_params.copy_arrays())
    train_pairs = corp.split("train")
    dev_pairs = corp.split("dev")
    start_dev = dev_corpus_bleu(params, dev_pairs)
    if start_dev < config.pretrain_threshold:
        raise ValueError(
            f"start checkpoint dev BLEU {start_dev:.4f} is below the "
            f"pretrain threshold {config.pretrain_threshold}"
        )
    if config.epochs == 0:
        return TrainResult(params, dict(start_state or {}), [], start_dev)

    state = make_optimizer_state(params, config.optimizer)
    tracker = _CurveTracker(
        params, dev_pairs,
        steps_per_epoch=max(1, -(-len(train_pairs) // config.batch_size)),
        eval_every=config.eval_every,
    )
    tracker.rows.append((0, 0.0, "dev", "corpus_bleu", start_dev))
    tracker.best_dev = start_dev
    tracker.best_arrays = params.copy_arrays()
    tracker.best_state = {k: a.copy() for k, a in state.items()}
    tracker.last_eval_step = 0

    ft_rng = rng_streams(config.seed)["finetune"]
    step = 0
    skipped_total = 0
    stop = False
    for _ in range(config.epochs):
        for batch in batch_iter(train_pairs, config.batch_size, seed=ft_rng):
            scored = []
            for src, tgt in batch.sentences():
                enc = encode(src, params)
                if config.decoding == "greedy":
                    outs = decode_greedy(enc, default_max_len(len(src)), params)
                    seq = ProbSequence([o.token for o in outs], [o.prob for o in outs])
                else:
                    outs = decode_teacher_forced(enc, tgt, params)
                    seq = ProbSequence(list(tgt), [o.prob for o in outs])
                scored.append((seq, tgt))
            loss, skipped = batch_loss(scored, config.objective)
            skipped_total += skipped
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite finetuning loss at step {step}",
                    tracker.result(skipped_total),
                )
            loss.backward()
            clip_gradients(params, config.grad_clip)
            try:
                optimizer_step(params, state, config.optimizer,
                               config.lr, config.rho, config.eps)
            except DivergenceError as err:
                err.result = tracker.result(skipped_total)
                raise
            params.zero_grads()
            step += 1
            tracker.note_loss(value, len(batch) - skipped)
            if tracker.due(step):
                dev = tracker.evaluate(step, state)
                if config.stop_at_dev_bleu > 0 and dev >= config.stop_at_dev_bleu:
                    stop = True
                    break
        if stop:
            break
    if step > 0:
        tracker.evaluate(step, state)
    return tracker.result(skipped_total)
