"""Attention-based encoder–decoder over the autodiff tape.

Single-layer unidirectional gated recurrent cells on both sides, additive
attention (softmax over v·tanh(W s + U h_i)), and a softmax readout from
the concatenated decoder state and context.  Every forward pass builds a
fresh per-sentence graph, so variable lengths need no padding inside the
model; batching happens outside by summing per-sentence losses.

Two decoding modes share all parameters: teacher-forced decoding conditions
each step on a caller-supplied token stream (the ground truth during MLE
training), greedy decoding feeds back its own argmax choices — the regime
that actually matches inference, exposure bias and all.

The begin sentinel is always fed at step 1.  Checkpoints are a one-line
JSON header (format version, config fingerprint, name/shape manifests)
followed by the raw little-endian float64 arrays in manifest order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .corpus import BOS, EOS

__all__ = [
    "ModelParams",
    "StepOutput",
    "init_params",
    "encode",
    "attention_context",
    "decode_teacher_forced",
    "decode_greedy",
    "cross_entropy_loss",
    "default_max_len",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = 1


@dataclass
class ModelParams:
    """All trainable weights, in the order they appear in checkpoints.

    Field order is the checkpoint manifest order — append new fields at the
    end or bump CHECKPOINT_FORMAT.
    """

    src_emb: Value
    tgt_emb: Value
    enc_wz: Value
    enc_wr: Value
    enc_wh: Value
    enc_uz: Value
    enc_ur: Value
    enc_uh: Value
    enc_bz: Value
    enc_br: Value
    enc_bh: Value
    dec_wz: Value
    dec_wr: Value
    dec_wh: Value
    dec_uz: Value
    dec_ur: Value
    dec_uh: Value
    dec_bz: Value
    dec_br: Value
    dec_bh: Value
    att_w: Value
    att_u: Value
    att_v: Value
    out_w: Value
    out_b: Value

    def named(self) -> list:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def zero_grads(self) -> None:
        for _, v in self.named():
            v.zero_grad()

    def copy_arrays(self) -> dict:
        return {name: v.data.copy() for name, v in self.named()}

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ModelParams":
        names = [f.name for f in fields(cls)]
        if set(arrays) != set(names):
            missing = set(names) - set(arrays)
            extra = set(arrays) - set(names)
            raise ValueError(
                f"parameter name mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        return cls(**{n: Value(arrays[n]) for n in names})


@dataclass
class StepOutput:
    """One decoder step: emitted token, its probability, the full distribution."""

    token: int
    prob: Value
    distribution: Value


def init_params(
    src_vocab_size: int,
    tgt_vocab_size: int,
    emb_size: int,
    hidden_size: int,
    attn_size: int,
    rng: np.random.Generator,
) -> ModelParams:
    """Uniform [-0.1, 0.1] initialization of every weight."""
    E, H, A = emb_size, hidden_size, attn_size

    def u(*shape):
        return Value(rng.uniform(-0.1, 0.1, size=shape))

    dec_in = E + H  # decoder input: previous embedding, attention context
    return ModelParams(
        src_emb=u(src_vocab_size, E),
        tgt_emb=u(tgt_vocab_size, E),
        enc_wz=u(E, H), enc_wr=u(E, H), enc_wh=u(E, H),
        enc_uz=u(H, H), enc_ur=u(H, H), enc_uh=u(H, H),
        enc_bz=u(H), enc_br=u(H), enc_bh=u(H),
        dec_wz=u(dec_in, H), dec_wr=u(dec_in, H), dec_wh=u(dec_in, H),
        dec_uz=u(H, H), dec_ur=u(H, H), dec_uh=u(H, H),
        dec_bz=u(H), dec_br=u(H), dec_bh=u(H),
        att_w=u(H, A), att_u=u(H, A), att_v=u(A),
        out_w=u(2 * H, tgt_vocab_size), out_b=u(tgt_vocab_size),
    )


def _gru_step(x, h, wz, wr, wh, uz, ur, uh, bz, br, bh):
    """One gated-cell update h' = (1-z)*h + z*h̃ for rank-1 x and h."""
    z = ad.sigmoid(x @ wz + h @ uz + bz)
    r = ad.sigmoid(x @ wr + h @ ur + br)
    h_cand = ad.tanh(x @ wh + (r * h) @ uh + bh)
    return h + z * (h_cand - h)


def encode(src, params: ModelParams) -> Value:
    """Run the encoder over a nonempty source; returns the (T, H) state stack.

    The three input-side projections are done for all positions in one
    matrix product each, so the per-step work is only the recurrent half.
    """
    if len(src) == 0:
        raise ValueError("cannot encode an empty source sentence")
    H = params.enc_uz.data.shape[0]
    x_all = ad.gather(params.src_emb, np.asarray(src))
    xz_all = x_all @ params.enc_wz
    xr_all = x_all @ params.enc_wr
    xh_all = x_all @ params.enc_wh
    h = Value(np.zeros(H))
    states = []
    for t in range(len(src)):
        z = ad.sigmoid(ad.gather(xz_all, t) + h @ params.enc_uz + params.enc_bz)
        r = ad.sigmoid(ad.gather(xr_all, t) + h @ params.enc_ur + params.enc_br)
        h_cand = ad.tanh(
            ad.gather(xh_all, t) + (r * h) @ params.enc_uh + params.enc_bh
        )
        h = h + z * (h_cand - h)
        states.append(h)
    return ad.stack(states)


def attention_context(state: Value, enc_states: Value, params: ModelParams,
                      enc_proj: Value | None = None):
    """Additive attention: returns (context, weights).

    Scores are v·tanh(W s + U h_i); the context is the weight-averaged
    encoder state stack.  ``enc_proj`` may carry a precomputed
    ``enc_states @ att_u`` so a decoding loop pays for it once.
    """
    if enc_proj is None:
        enc_proj = enc_states @ params.att_u
    scores = ad.tanh(enc_proj + state @ params.att_w) @ params.att_v
    weights = ad.softmax(scores)
    return weights @ enc_states, weights


def _decoder_start(enc_states: Value) -> Value:
    # decoder state 0 = final encoder state
    return ad.gather(enc_states, enc_states.data.shape[0] - 1)


def _decoder_step(prev_token, state, enc_states, enc_proj, params, dropout_mask):
    context, _ = attention_context(state, enc_states, params, enc_proj)
    x = ad.concat([ad.gather(params.tgt_emb, int(prev_token)), context])
    state = _gru_step(
        x, state,
        params.dec_wz, params.dec_wr, params.dec_wh,
        params.dec_uz, params.dec_ur, params.dec_uh,
        params.dec_bz, params.dec_br, params.dec_bh,
    )
    readout = ad.concat([state, context])
    if dropout_mask is not None:
        readout = readout * dropout_mask
    dist = ad.softmax(readout @ params.out_w + params.out_b)
    return state, dist


def _dropout_masks(rate, rng, size, steps):
    """Inverted-dropout masks (scaled by 1/keep), one per step, or Nones."""
    if rate <= 0.0:
        return [None] * steps
    if rng is None:
        raise ValueError("dropout requires a random generator")
    keep = 1.0 - rate
    return [(rng.random(size) < keep) / keep for _ in range(steps)]


def decode_teacher_forced(
    enc_states: Value,
    forced,
    params: ModelParams,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list:
    """Decode conditioning on a caller-supplied token stream.

    Step j sees begin-sentinel + forced[:j] as context and is scored on
    forced[j]; one StepOutput per forced token.  For MLE training pass the
    target with the end sentinel appended so its prediction is trained too.
    Dropout (inverted, output layer only) is for MLE pretraining; leave it
    at 0 everywhere else.
    """
    if len(forced) == 0:
        raise ValueError("teacher forcing needs a nonempty token stream")
    tgt_vocab = params.tgt_emb.data.shape[0]
    if any(t < 0 or t >= tgt_vocab for t in forced):
        raise ValueError(f"token out of vocabulary (size {tgt_vocab}): {list(forced)}")
    enc_proj = enc_states @ params.att_u
    state = _decoder_start(enc_states)
    masks = _dropout_masks(dropout, rng, 2 * state.data.shape[0], len(forced))
    outputs = []
    prev = BOS
    for j, token in enumerate(forced):
        state, dist = _decoder_step(prev, state, enc_states, enc_proj, params, masks[j])
        outputs.append(StepOutput(int(token), ad.gather(dist, int(token)), dist))
        prev = token
    return outputs


def decode_greedy(enc_states: Value, max_len: int, params: ModelParams) -> list:
    """Decode by feeding back the argmax token until the end sentinel.

    The end-sentinel step is not part of the returned outputs, so the
    token sequence is sentinel-free; an immediate end sentinel yields [].
    Ties in the argmax resolve to the lowest token id.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    enc_proj = enc_states @ params.att_u
    state = _decoder_start(enc_states)
    outputs = []
    prev = BOS
    for _ in range(max_len):
        state, dist = _decoder_step(prev, state, enc_states, enc_proj, params, None)
        token = int(np.argmax(dist.data))
        if token == EOS:
            break
        outputs.append(StepOutput(token, ad.gather(dist, token), dist))
        prev = token
    return outputs


def default_max_len(src_len: int) -> int:
    """Greedy decoding budget: generous for copy-like tasks, still bounded."""
    return 2 * src_len + 5


def cross_entropy_loss(steps, targets) -> Value:
    """Negative log-likelihood −Σ_j log p(targets[j]) over aligned steps."""
    if len(steps) != len(targets):
        raise ValueError(f"{len(steps)} steps but {len(targets)} target tokens")
    logps = [ad.log(ad.gather(s.distribution, int(t))) for s, t in zip(steps, targets)]
    if len(logps) == 1:
        return -logps[0]
    return -ad.sum_reduce(ad.stack(logps))


# -- checkpoint file format ----------------------------------------------------


def save_checkpoint(path, params: ModelParams, fingerprint: str, state: dict | None = None):
    """Write header line + raw float64 arrays.

    ``state`` holds optimizer accumulators (name -> array); arrays follow
    the parameters in the order listed by the two manifests.
    """
    state = state or {}
    header = {
        "format": CHECKPOINT_FORMAT,
        "fingerprint": fingerprint,
        "params": [[name, list(v.data.shape)] for name, v in params.named()],
        "state": [[name, list(a.shape)] for name, a in sorted(state.items())],
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for _, v in params.named():
            f.write(np.ascontiguousarray(v.data, dtype="<f8").tobytes())
        for name in sorted(state):
            f.write(np.ascontiguousarray(state[name], dtype="<f8").tobytes())


def load_checkpoint(path, expect_fingerprint: str | None = None):
    """Read a checkpoint; returns (ModelParams, state dict, fingerprint).

    With ``expect_fingerprint`` given, a mismatch is an error — the caller's
    configuration does not describe the model in the file.
    """
    path = Path(path)
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(
                f"{path}: unsupported checkpoint format {header.get('format')!r}"
            )
        fingerprint = header["fingerprint"]
        if expect_fingerprint is not None and fingerprint != expect_fingerprint:
            raise ValueError(
                f"{path}: checkpoint fingerprint {fingerprint} does not match "
                f"the configured model ({expect_fingerprint})"
            )

        def read_arrays(manifest):
            out = {}
            for name, shape in manifest:
                n = int(np.prod(shape)) if shape else 1
                buf = f.read(8 * n)
                if len(buf) != 8 * n:
                    raise ValueError(f"{path}: truncated at array {name!r}")
                out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
            return out

        param_arrays = read_arrays(header["params"])
        state = read_arrays(header["state"])
    return ModelParams.from_arrays(param_arrays), state, fingerprint
