"""Shared bi-GRU encoder, two attentional GRU decoders, CNN critic heads.

Parameters live in one flat ``name -> Tensor`` dict on :class:`ModelState`;
parameter groups (``E``, ``Gs``, ``Gd``, ``D``, ``C``) are views onto it.
``D`` and ``C`` share every convolution tensor and differ only in their
final affine layer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .text import BOS_ID, EOS_ID, PAD_ID, Vocabulary

CHECKPOINT_VERSION = 1
DECODERS = ("Gs", "Gd")


@dataclass
class ModelConfig:
    vocab_size: int = 512
    emb_dim: int = 32
    hidden: int = 64               # per encoder direction and per decoder layer
    layers: int = 2
    attention: str = "general"     # "general" (bilinear) or "additive"
    n_filters: int = 128
    filter_sizes: tuple = (1, 2, 3, 4, 5)
    tie_embeddings: bool = False   # one matrix for encoder and decoders
    init_scale: float = 0.1
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.filter_sizes = tuple(int(k) for k in self.filter_sizes)
        if self.attention not in ("general", "additive"):
            raise ValueError(f"unknown attention {self.attention!r}")


PRESETS = {
    "desk": dict(emb_dim=32, hidden=64),
    "full": dict(emb_dim=300, hidden=600),
    "toy": dict(emb_dim=6, hidden=8, n_filters=4, filter_sizes=(1, 2, 3), dtype="float64"),
}


class ModelState:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary | None = None, embeddings: dict | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.dtype = np.dtype(cfg.dtype)
        self.params: dict[str, Tensor] = {}
        self.groups: dict[str, list[str]] = {g: [] for g in ("E", "Gs", "Gd", "conv", "D_head", "C_head")}
        self._init(embeddings)

    # -- construction --------------------------------------------------------
    def _new(self, group: str | None, name: str, shape, rng, zero: bool = False, trainable: bool = True) -> Tensor:
        s = self.cfg.init_scale
        data = np.zeros(shape) if zero else rng.uniform(-s, s, size=shape)
        t = Tensor(data.astype(self.dtype), requires_grad=trainable, name=name)
        self.params[name] = t
        if group is not None:
            self.groups[group].append(name)
        return t

    def _init(self, embeddings) -> None:
        c = self.cfg
        rng = np.random.default_rng([c.seed, 11])
        V, E, H = c.vocab_size, c.emb_dim, c.hidden
        emb = rng.normal(0.0, 1.0 / np.sqrt(E), size=(V, E))
        if embeddings:
            if self.vocab is None:
                raise ValueError("pretrained embeddings need a vocabulary")
            for tok, vec in embeddings.items():
                if tok in self.vocab:
                    if len(vec) != E:
                        raise ValueError(f"embedding for {tok!r} has dim {len(vec)}, expected {E}")
                    emb[self.vocab.lookup(tok)] = vec
        emb[PAD_ID] = 0.0
        shared = Tensor(emb.astype(self.dtype), requires_grad=c.tie_embeddings, name="E/emb")
        self.params["E/emb"] = shared

        in_dim = E
        for layer in range(c.layers):
            for d in "fb":
                p = f"E/l{layer}{d}"
                self._new("E", f"{p}/Wx", (in_dim, 3 * H), rng)
                self._new("E", f"{p}/bx", (3 * H,), rng, zero=True)
                self._new("E", f"{p}/Wh", (H, 3 * H), rng)
                self._new("E", f"{p}/bh", (3 * H,), rng, zero=True)
            in_dim = 2 * H

        for g in DECODERS:
            if c.tie_embeddings:
                self.groups[g].append("E/emb")
            else:
                t = Tensor(emb.astype(self.dtype), requires_grad=True, name=f"{g}/emb")
                self.params[t.name] = t
                self.groups[g].append(t.name)
            for layer in range(c.layers):
                self._new(g, f"{g}/init{layer}/W", (2 * H, H), rng)
                self._new(g, f"{g}/init{layer}/b", (H,), rng, zero=True)
                p = f"{g}/l{layer}"
                if layer == 0:
                    self._new(g, f"{p}/Wx_emb", (E, 3 * H), rng)
                    self._new(g, f"{p}/Wx_ctx", (2 * H, 3 * H), rng)
                else:
                    self._new(g, f"{p}/Wx", (H, 3 * H), rng)
                self._new(g, f"{p}/bx", (3 * H,), rng, zero=True)
                self._new(g, f"{p}/Wh", (H, 3 * H), rng)
                self._new(g, f"{p}/bh", (3 * H,), rng, zero=True)
            if c.attention == "general":
                self._new(g, f"{g}/attn/W", (2 * H, H), rng)
            else:
                self._new(g, f"{g}/attn/Wk", (2 * H, H), rng)
                self._new(g, f"{g}/attn/Wq", (H, H), rng)
                self._new(g, f"{g}/attn/v", (H,), rng)
            self._new(g, f"{g}/out/Wd", (H, V), rng)
            self._new(g, f"{g}/out/Wc", (2 * H, V), rng)
            self._new(g, f"{g}/out/b", (V,), rng, zero=True)

        for k in c.filter_sizes:
            self._new("conv", f"conv/k{k}/W", (k, 2 * H, c.n_filters), rng)
            self._new("conv", f"conv/k{k}/b", (c.n_filters,), rng, zero=True)
        feat = c.n_filters * len(c.filter_sizes)
        for head in ("D", "C"):
            self._new(f"{head}_head", f"{head}/W", (feat, 1), rng)
            self._new(f"{head}_head", f"{head}/b", (1,), rng, zero=True)

    # -- groups ----------------------------------------------------------------
    def group(self, name: str) -> list[Tensor]:
        """Trainable tensors of a parameter group; ``D``/``C`` include the shared convolutions."""
        if name == "D":
            names = self.groups["conv"] + self.groups["D_head"]
        elif name == "C":
            names = self.groups["conv"] + self.groups["C_head"]
        elif name in self.groups:
            names = self.groups[name]
        else:
            raise KeyError(f"unknown parameter group {name!r}")
        return [self.params[n] for n in names]

    def groups_params(self, names: Sequence[str]) -> list[Tensor]:
        seen, out = set(), []
        for g in names:
            for p in self.group(g):
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.params[k].data = v.copy()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def p(self, name: str, frozen: bool = False) -> Tensor:
        t = self.params[name]
        return t.detach() if frozen else t

    def const(self, x) -> Tensor:
        return Tensor(np.asarray(x, dtype=self.dtype))


# ---------------------------------------------------------------------------
# batching helpers


def pad_ids(seqs: Sequence[Sequence[int]], min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if len(seqs) == 0 or lengths.min() < 1:
        raise ValueError("cannot encode an empty sentence")
    width = max(int(lengths.max()), min_len)
    out = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


@dataclass
class Encoded:
    H: Tensor                      # (B, n, 2*hidden)
    mask: np.ndarray               # (B, n) valid source positions
    lengths: np.ndarray
    finals: list                   # per layer (B, 2*hidden): forward final || backward final
    ids: np.ndarray


@dataclass
class DecoderState:
    h: list                        # per layer (B, hidden)
    context: Tensor                # previous A_t, fed to the next step


@dataclass
class Decoded:
    probs: Tensor | None           # (B, m, V) when teacher forced
    contexts: Tensor               # (B, m, 2*hidden), zero past each row's length
    weights: np.ndarray            # (B, m, n) attention weights
    mask: np.ndarray               # (B, m) valid decoding steps
    tokens: list = field(default_factory=list)   # free running: emitted ids without EOS
    step_probs: np.ndarray | None = None          # free running: (B, m, V)

    def trace(self, b: int) -> "AttentionTrace":
        m = int(self.mask[b].sum())
        return AttentionTrace(self.contexts.data[b, :m].copy(), self.weights[b, :m].copy())


@dataclass
class AttentionTrace:
    contexts: np.ndarray           # (m, 2*hidden)
    weights: np.ndarray            # (m, n)

    def __len__(self) -> int:
        return self.contexts.shape[0]


# ---------------------------------------------------------------------------
# GRU / encoder


def gru_cell(gx: Tensor, h: Tensor, Wh: Tensor, bh: Tensor, H: int) -> Tensor:
    """PyTorch-convention GRU step given the precomputed input projection ``gx``."""
    gh = h @ Wh + bh
    rz = T.sigmoid(gx[:, : 2 * H] + gh[:, : 2 * H])
    r = rz[:, :H]
    z = rz[:, H:]
    n = T.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
    return n + z * (h - n)


def _masked(h_new: Tensor, h_old: Tensor, m: np.ndarray, state: ModelState) -> Tensor:
    if m.all():
        return h_new
    return h_old + state.const(m[:, None]) * (h_new - h_old)


def encode_ids(state: ModelState, seqs: Sequence[Sequence[int]]) -> Encoded:
    cfg = state.cfg
    H = cfg.hidden
    ids, lengths = pad_ids(seqs)
    B, n = ids.shape
    mask = np.arange(n)[None, :] < lengths[:, None]
    # encoder-side embeddings are static
    x = T.gather(state.p("E/emb", frozen=True), ids)
    finals = []
    zero = state.const(np.zeros((B, H)))
    for layer in range(cfg.layers):
        outs = {}
        last = {}
        for d in "fb":
            pre = f"E/l{layer}{d}"
            GX = x @ state.p(f"{pre}/Wx") + state.p(f"{pre}/bx")
            Wh, bh = state.p(f"{pre}/Wh"), state.p(f"{pre}/bh")
            h = zero
            seq = [None] * n
            steps = range(n) if d == "f" else range(n - 1, -1, -1)
            for t in steps:
                h = _masked(gru_cell(GX[:, t], h, Wh, bh, H), h, mask[:, t], state)
                seq[t] = h
            outs[d] = T.stack(seq, axis=1)
            last[d] = h
        x = T.concat([outs["f"], outs["b"]], axis=2)
        finals.append(T.concat([last["f"], last["b"]], axis=1))
    return Encoded(H=x, mask=mask, lengths=lengths, finals=finals, ids=ids)


def encode(sentence: Sequence[str], state: ModelState) -> np.ndarray:
    """Hidden sequence (n, 2*hidden) for one tokenized sentence."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    if state.vocab is None:
        raise ValueError("model state has no vocabulary")
    with T.no_grad():
        enc = encode_ids(state, [state.vocab.encode(sentence)])
    return enc.H.data[0]


# ---------------------------------------------------------------------------
# attention and decoder


def attend(H: Tensor, query: Tensor, mask: np.ndarray, state: ModelState, which: str,
           keys: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Global attention; returns (context (B, 2h), weights (B, n))."""
    B, n, _ = H.shape
    if keys is None:
        keys = attention_keys(H, state, which)
    if state.cfg.attention == "general":
        scores = (keys * T.reshape(query, (B, 1, -1))).sum(axis=2)
    else:
        q = query @ state.p(f"{which}/attn/Wq")
        scores = (T.tanh(keys + T.reshape(q, (B, 1, -1))) * state.p(f"{which}/attn/v")).sum(axis=2)
    if not mask.all():
        scores = scores + state.const(np.where(mask, 0.0, -1e9))
    w = T.softmax(scores, axis=1)
    ctx = (T.reshape(w, (B, n, 1)) * H).sum(axis=1)
    return ctx, w


def context_from_weights(H: Tensor, w: Tensor) -> Tensor:
    B, n = w.shape
    return (T.reshape(w, (B, n, 1)) * H).sum(axis=1)


def attention_keys(H: Tensor, state: ModelState, which: str) -> Tensor:
    if state.cfg.attention == "general":
        return H @ state.p(f"{which}/attn/W")
    return H @ state.p(f"{which}/attn/Wk")


def init_decoder(state: ModelState, which: str, enc: Encoded) -> DecoderState:
    _check_decoder(which)
    h = [enc.finals[l] @ state.p(f"{which}/init{l}/W") + state.p(f"{which}/init{l}/b")
         for l in range(state.cfg.layers)]
    B = enc.H.shape[0]
    return DecoderState(h=h, context=state.const(np.zeros((B, 2 * state.cfg.hidden))))


def _check_decoder(which: str) -> None:
    if which not in DECODERS:
        raise ValueError(f"unknown decoder {which!r}; expected one of {DECODERS}")


def _emb_name(state: ModelState, which: str) -> str:
    return "E/emb" if state.cfg.tie_embeddings else f"{which}/emb"


def _core_step(state: ModelState, which: str, x_proj: Tensor, ds: DecoderState, enc: Encoded, keys: Tensor):
    H = state.cfg.hidden
    hs = []
    gx = x_proj + ds.context @ state.p(f"{which}/l0/Wx_ctx")
    h = gru_cell(gx, ds.h[0], state.p(f"{which}/l0/Wh"), state.p(f"{which}/l0/bh"), H)
    hs.append(h)
    for l in range(1, state.cfg.layers):
        gx = h @ state.p(f"{which}/l{l}/Wx") + state.p(f"{which}/l{l}/bx")
        h = gru_cell(gx, ds.h[l], state.p(f"{which}/l{l}/Wh"), state.p(f"{which}/l{l}/bh"), H)
        hs.append(h)
    ctx, w = attend(enc.H, h, enc.mask, state, which, keys=keys)
    return DecoderState(h=hs, context=ctx), w


def _output_logits(state: ModelState, which: str, top: Tensor, ctx: Tensor) -> Tensor:
    return top @ state.p(f"{which}/out/Wd") + ctx @ state.p(f"{which}/out/Wc") + state.p(f"{which}/out/b")


def decode_step(state: ModelState, which: str, prev_tokens, ds: DecoderState, enc: Encoded,
                keys: Tensor | None = None):
    """One decoder step for a batch: (distribution (B, V), new state, A_t, weights)."""
    _check_decoder(which)
    prev = np.asarray(prev_tokens, dtype=np.int64).reshape(-1)
    emb = T.gather(state.p(_emb_name(state, which)), prev)
    x_proj = emb @ state.p(f"{which}/l0/Wx_emb") + state.p(f"{which}/l0/bx")
    if keys is None:
        keys = attention_keys(enc.H, state, which)
    new, w = _core_step(state, which, x_proj, ds, enc, keys)
    probs = T.softmax(_output_logits(state, which, new.h[-1], new.context), axis=1)
    return probs, new, new.context, w


def decode_teacher_forced(state: ModelState, which: str, enc: Encoded, targets: Sequence[Sequence[int]]) -> Decoded:
    """Score ``targets`` (each already ending in EOS if wanted); one step per target token."""
    _check_decoder(which)
    tgt, tlen = pad_ids(targets)
    B, m = tgt.shape
    if B != enc.H.shape[0]:
        raise T.ShapeError("decode", f"{B} targets for {enc.H.shape[0]} sources")
    prev = np.concatenate([np.full((B, 1), BOS_ID), tgt[:, :-1]], axis=1)
    emb = T.gather(state.p(_emb_name(state, which)), prev)
    X = emb @ state.p(f"{which}/l0/Wx_emb") + state.p(f"{which}/l0/bx")
    keys = attention_keys(enc.H, state, which)
    ds = init_decoder(state, which, enc)
    tops, ctxs, ws = [], [], []
    for t in range(m):
        ds, w = _core_step(state, which, X[:, t], ds, enc, keys)
        tops.append(ds.h[-1])
        ctxs.append(ds.context)
        ws.append(w.data)
    top = T.stack(tops, axis=1)
    ctx = T.stack(ctxs, axis=1)
    probs = T.softmax(_output_logits(state, which, top, ctx), axis=2)
    mask = np.arange(m)[None, :] < tlen[:, None]
    if not mask.all():
        ctx = ctx * state.const(mask[:, :, None])
    return Decoded(probs=probs, contexts=ctx, weights=np.stack(ws, axis=1), mask=mask)


def free_running_cap(n: int) -> int:
    return int(1.5 * n) + 5


def decode_free_running(state: ModelState, which: str, enc: Encoded, max_len=None) -> Decoded:
    """Greedy decoding until EOS or the per-row cap.

    The returned contexts stay differentiable w.r.t. encoder and decoder
    parameters; token choices are constants.  ``max_len`` may be an int or a
    per-row array; defaults to ``1.5 * n + 5``.
    """
    _check_decoder(which)
    B = enc.H.shape[0]
    if max_len is None:
        caps = np.array([free_running_cap(int(n)) for n in enc.lengths])
    else:
        caps = np.broadcast_to(np.asarray(max_len, dtype=np.int64), (B,)).copy()
    if caps.min() < 1:
        raise ValueError("max_len must be at least 1")
    keys = attention_keys(enc.H, state, which)
    emb_table = state.p(_emb_name(state, which))
    Wx_emb, bx = state.p(f"{which}/l0/Wx_emb"), state.p(f"{which}/l0/bx")
    Wd, Wc, bo = (state.params[f"{which}/out/{k}"].data for k in ("Wd", "Wc", "b"))
    ds = init_decoder(state, which, enc)
    prev = np.full(B, BOS_ID, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    tokens: list[list[int]] = [[] for _ in range(B)]
    ctxs, ws, masks, step_probs = [], [], [], []
    t = 0
    while alive.any() and t < caps.max():
        x_proj = T.gather(emb_table, prev) @ Wx_emb + bx
        ds, w = _core_step(state, which, x_proj, ds, enc, keys)
        logits = ds.h[-1].data @ Wd + ds.context.data @ Wc + bo
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = z / z.sum(axis=1, keepdims=True)
        nxt = probs.argmax(axis=1)
        masks.append(alive.copy())
        ctxs.append(ds.context)
        ws.append(w.data)
        step_probs.append(probs)
        for b in np.flatnonzero(alive):
            if nxt[b] == EOS_ID:
                alive[b] = False
            else:
                tokens[b].append(int(nxt[b]))
        t += 1
        alive &= t < caps
        prev = nxt
    mask = np.stack(masks, axis=1)
    ctx = T.stack(ctxs, axis=1)
    if not mask.all():
        ctx = ctx * state.const(mask[:, :, None])
    return Decoded(probs=None, contexts=ctx, weights=np.stack(ws, axis=1), mask=mask,
                   tokens=tokens, step_probs=np.stack(step_probs, axis=1))


def decode_sequence(state: ModelState, which: str, enc: Encoded, target=None, max_len=None) -> Decoded:
    if target is not None:
        return decode_teacher_forced(state, which, enc, target)
    return decode_free_running(state, which, enc, max_len=max_len)


# ---------------------------------------------------------------------------
# discriminator / classifier


def critic_features(state: ModelState, contexts: Tensor, mask: np.ndarray, frozen: bool = False) -> Tensor:
    """Shared convolution stack: conv -> tanh -> max over valid windows, all sizes concatenated."""
    lengths = np.asarray(mask).sum(axis=1)
    if lengths.size == 0 or lengths.min() < 1:
        raise ValueError("discriminator/classifier need a non-empty trace")
    B, m, dim = contexts.shape
    kmax = max(state.cfg.filter_sizes)
    x = contexts
    if m < kmax:
        x = T.concat([x, state.const(np.zeros((B, kmax - m, dim)))], axis=1)
    width = x.shape[1]
    feats = []
    for k in state.cfg.filter_sizes:
        act = T.tanh(T.conv1d(x, state.p(f"conv/k{k}/W", frozen), state.p(f"conv/k{k}/b", frozen)))
        last_start = np.maximum(lengths - k, 0)
        valid = np.arange(width - k + 1)[None, :] <= last_start[:, None]
        feats.append(T.max_over_time(act, valid))
    return T.concat(feats, axis=1)


def _head(state: ModelState, head: str, feats: Tensor, frozen: bool) -> Tensor:
    logit = feats @ state.p(f"{head}/W", frozen) + state.p(f"{head}/b", frozen)
    return T.reshape(T.sigmoid(logit), (feats.shape[0],))


def discriminate_batch(state: ModelState, contexts: Tensor, mask: np.ndarray, frozen: bool = False,
                       feats: Tensor | None = None) -> Tensor:
    """D(trace) for each row: probability the trace came from a simple input."""
    if feats is None:
        feats = critic_features(state, contexts, mask, frozen)
    return _head(state, "D", feats, frozen)


def classify_batch(state: ModelState, contexts: Tensor, mask: np.ndarray, frozen: bool = False,
                   feats: Tensor | None = None) -> Tensor:
    """C(trace) for each row: probability the trace is a G_s trace of a simple input."""
    if feats is None:
        feats = critic_features(state, contexts, mask, frozen)
    return _head(state, "C", feats, frozen)


def _single(state: ModelState, trace) -> tuple[Tensor, np.ndarray]:
    ctx = trace.contexts if isinstance(trace, AttentionTrace) else np.asarray(trace)
    if ctx.ndim != 2 or ctx.shape[0] == 0:
        raise ValueError("discriminator/classifier need a non-empty trace")
    return state.const(ctx[None]), np.ones((1, ctx.shape[0]), dtype=bool)


def discriminate(trace, state: ModelState) -> float:
    with T.no_grad():
        x, m = _single(state, trace)
        return float(discriminate_batch(state, x, m).data[0])


def classify(trace, state: ModelState) -> float:
    with T.no_grad():
        x, m = _single(state, trace)
        return float(classify_batch(state, x, m).data[0])


# ---------------------------------------------------------------------------
# files


def write_embeddings(path, vectors: dict) -> None:
    """``token v1 v2 ...`` per line, floats written with full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in sorted(vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vectors[tok]) + "\n")


def load_embeddings(path) -> dict:
    vecs = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            v = np.array([float(x) for x in parts[1:]])
            if dim is None:
                dim = v.size
            elif v.size != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} floats, got {v.size}")
            vecs[parts[0]] = v
    return vecs


def save_checkpoint(path, state: ModelState, step: int = 0, extra_meta: dict | None = None,
                    extra_arrays: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "model": asdict(state.cfg),
        "step": int(step),
        "vocab": state.vocab.itos if state.vocab is not None else None,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = {f"param/{k}": v.data for k, v in state.params.items()}
    if extra_arrays:
        arrays.update(extra_arrays)
    arrays["meta"] = np.array(json.dumps(meta))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ModelState, dict, dict]:
    """Returns (state, meta, other arrays)."""
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    vocab = None
    if meta.get("vocab") is not None:
        vocab = Vocabulary(meta["vocab"][4:])
    state = ModelState(ModelConfig(**meta["model"]), vocab=vocab)
    for k in list(arrays):
        if k.startswith("param/"):
            state.params[k[len("param/"):]].data = arrays.pop(k)
    return state, meta, arrays
