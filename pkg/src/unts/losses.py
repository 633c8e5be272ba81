"""Training objectives and the bigram-swap noise.

Batches are lists of token-id lists (no BOS/EOS); targets get EOS appended
here.  Reconstruction-family losses average token NLL within a sentence,
then average over the batch.  Every log is taken of a probability clamped
below at ``eps``.

Stop-gradient separation: critic-side losses see detached traces, and
generator-side adversarial/diversification losses see frozen critic
parameters, so backward on one never populates the other side's grads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .model import (Decoded, Encoded, ModelState, classify_batch, critic_features, decode_free_running,
                    decode_teacher_forced, discriminate_batch, encode_ids, pad_ids)
from .tensor import Tensor
from .text import EOS_ID

EPS = 1e-7


def _require(batch, what: str) -> None:
    if len(batch) == 0:
        raise ValueError(f"empty {what} batch")


def with_eos(seqs: Sequence[Sequence[int]]) -> list[list[int]]:
    return [list(s) + [EOS_ID] for s in seqs]


def safe_log(p: Tensor, eps: float = EPS) -> Tensor:
    return T.log(T.clamp_min(p, eps))


# ---------------------------------------------------------------------------
# noise


def noise(tokens: Sequence, seed=None, swap_prob: float = 0.5, rng: np.random.Generator | None = None) -> list:
    """Swap consecutive disjoint pairs (0,1), (2,3), ... each with ``swap_prob``.

    A trailing odd token stays put.  Deterministic for a given seed.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    out = list(tokens)
    for i in range(0, len(out) - 1, 2):
        if rng.random() < swap_prob:
            out[i], out[i + 1] = out[i + 1], out[i]
    return out


def noise_batch(batch: Sequence[Sequence], seed, swap_prob: float = 0.5) -> list[list]:
    rng = np.random.default_rng(seed)
    return [noise(s, swap_prob=swap_prob, rng=rng) for s in batch]


# ---------------------------------------------------------------------------
# sequence likelihood


def sequence_nll(dec: Decoded, targets: Sequence[Sequence[int]], eps: float = EPS) -> Tensor:
    """Batch mean of per-sentence mean token NLL under a teacher-forced decode."""
    tgt, tlen = pad_ids(targets)
    B, m = tgt.shape
    V = dec.probs.shape[2]
    mask = np.arange(m)[None, :] < tlen[:, None]
    onehot = np.zeros((B, m, V), dtype=dec.probs.dtype)
    bi, ti = np.nonzero(mask)
    onehot[bi, ti, tgt[bi, ti]] = 1.0
    p = (dec.probs * Tensor(onehot)).sum(axis=2)
    w = (mask / tlen[:, None] / B).astype(dec.probs.dtype)
    return -(safe_log(p, eps) * Tensor(w)).sum()


def path_nll(state: ModelState, which: str, sources, targets, eps: float = EPS,
             enc: Encoded | None = None) -> tuple[Tensor, Decoded]:
    if enc is None:
        enc = encode_ids(state, sources)
    tgt = with_eos(targets)
    dec = decode_teacher_forced(state, which, enc, tgt)
    return sequence_nll(dec, tgt, eps), dec


def reconstruction_loss(batch_S, batch_D, state: ModelState, eps: float = EPS) -> Tensor:
    """-E log P_{E-Gs}(X_s) - E log P_{E-Gd}(X_d)."""
    _require(batch_S, "simple")
    _require(batch_D, "complex")
    ls, _ = path_nll(state, "Gs", batch_S, batch_S, eps)
    ld, _ = path_nll(state, "Gd", batch_D, batch_D, eps)
    return ls + ld


def denoising_loss(batch_S, batch_D, seed, state: ModelState, swap_prob: float = 0.5,
                   eps: float = EPS) -> Tensor:
    """Reconstruct each clean sentence from its bigram-swapped version."""
    _require(batch_S, "simple")
    _require(batch_D, "complex")
    rng = np.random.default_rng(seed)
    noisy_S = [noise(s, swap_prob=swap_prob, rng=rng) for s in batch_S]
    noisy_D = [noise(s, swap_prob=swap_prob, rng=rng) for s in batch_D]
    ls, _ = path_nll(state, "Gs", noisy_S, batch_S, eps)
    ld, _ = path_nll(state, "Gd", noisy_D, batch_D, eps)
    return ls + ld


def cross_entropy_loss(pairs, state: ModelState, paths=("Gs", "Gd"), eps: float = EPS) -> Tensor:
    """Supervised loss on (complex, simple) pairs.

    ``Gs`` term: -log P(simple | complex); ``Gd`` term: -log P(complex | simple).
    """
    if len(pairs) == 0:
        raise ValueError("cross-entropy loss needs at least one parallel pair")
    cx = [c for c, _ in pairs]
    sx = [s for _, s in pairs]
    total = None
    for which in paths:
        src, tgt = (cx, sx) if which == "Gs" else (sx, cx)
        term, _ = path_nll(state, which, src, tgt, eps)
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# traces and critic losses


@dataclass
class Traces:
    s_of_S: Decoded            # A_s(X_s), teacher forced
    d_of_D: Decoded            # A_d(X_d), teacher forced
    s_of_D: Decoded            # A_s(X_d), free running
    nll_s: Tensor              # reconstruction terms from the same decodes
    nll_d: Tensor


def compute_traces(state: ModelState, batch_S, batch_D, eps: float = EPS, free_run: bool = True) -> Traces:
    _require(batch_S, "simple")
    _require(batch_D, "complex")
    enc_S = encode_ids(state, batch_S)
    enc_D = encode_ids(state, batch_D)
    nll_s, dec_sS = path_nll(state, "Gs", batch_S, batch_S, eps, enc=enc_S)
    nll_d, dec_dD = path_nll(state, "Gd", batch_D, batch_D, eps, enc=enc_D)
    dec_sD = decode_free_running(state, "Gs", enc_D) if free_run else None
    return Traces(dec_sS, dec_dD, dec_sD, nll_s, nll_d)


def _detached(dec: Decoded) -> Tensor:
    return Tensor(dec.contexts.data)


def critic_losses(state: ModelState, tr: Traces, eps: float = EPS) -> tuple[Tensor, Tensor]:
    """(L_adv_D, L_div_C) on detached traces; gradients reach only D/C parameters."""
    real = critic_features(state, _detached(tr.s_of_S), tr.s_of_S.mask)
    fake = critic_features(state, _detached(tr.s_of_D), tr.s_of_D.mask)
    comp = critic_features(state, _detached(tr.d_of_D), tr.d_of_D.mask)
    adv_d = -(safe_log(discriminate_batch(state, None, tr.s_of_S.mask, feats=real), eps).mean()
              + safe_log(1.0 - discriminate_batch(state, None, tr.s_of_D.mask, feats=fake), eps).mean())
    div_c = -(safe_log(classify_batch(state, None, tr.s_of_S.mask, feats=real), eps).mean()
              + safe_log(1.0 - classify_batch(state, None, tr.d_of_D.mask, feats=comp), eps).mean())
    return adv_d, div_c


def generator_critic_losses(state: ModelState, tr: Traces, eps: float = EPS) -> tuple[Tensor, Tensor]:
    """(L_adv_Gs, L_div_Gs) through frozen critic parameters; gradients reach E and Gs."""
    feats = critic_features(state, tr.s_of_D.contexts, tr.s_of_D.mask, frozen=True)
    adv_g = -safe_log(discriminate_batch(state, None, tr.s_of_D.mask, frozen=True, feats=feats), eps).mean()
    div_g = -safe_log(classify_batch(state, None, tr.s_of_D.mask, frozen=True, feats=feats), eps).mean()
    return adv_g, div_g


def adversarial_losses(batch_S, batch_D, state: ModelState, eps: float = EPS) -> tuple[Tensor, Tensor]:
    """(L_adv_D, L_adv_Gs)."""
    tr = compute_traces(state, batch_S, batch_D, eps)
    return critic_losses(state, tr, eps)[0], generator_critic_losses(state, tr, eps)[0]


def diversification_losses(batch_S, batch_D, state: ModelState, eps: float = EPS) -> tuple[Tensor, Tensor]:
    """(L_div_C, L_div_Gs)."""
    tr = compute_traces(state, batch_S, batch_D, eps)
    return critic_losses(state, tr, eps)[1], generator_critic_losses(state, tr, eps)[1]
