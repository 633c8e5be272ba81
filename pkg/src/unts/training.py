"""Two-phase unsupervised training and its semi-supervised extension.

One iteration of each phase, in order:

    init:  denoise(E,Gs,Gd) -> reconstruct(E,Gs,Gd) -> critic(D,C)
    adv:   denoise(E,Gs,Gd) -> generator(E,Gs,Gd: adv + div + rec) -> critic(D,C)
           [semi-supervised: -> cross_s(E,Gs) -> cross_d(E,Gd)]

Each named update is its own optimizer step over exactly the listed groups.
Batches and noise are pure functions of (seed, iteration), so a resumed run
replays the same data as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .evaluation import EvalInstance, EvalReport, evaluate
from .inference import simplify_sentences
from .losses import (EPS, compute_traces, critic_losses, denoising_loss, generator_critic_losses, path_nll)
from .model import ModelConfig, ModelState, load_checkpoint, save_checkpoint
from .optim import Adam, clip_grad_norm
from .text import Corpus, Vocabulary

log = logging.getLogger(__name__)

VARIANTS = ("UNTS", "UNTS-adv", "UNTS-div")
MODES = ("unsupervised", "semisupervised")


class ConfigError(ValueError):
    pass


@dataclass
class TrainingConfig:
    mode: str = "unsupervised"
    variant: str = "UNTS"
    init_steps: int = 600
    adv_steps: int = 800
    batch_size: int = 8
    lr_gen: float = 0.002
    lr_critic: float = 0.0005
    emb_dim: int = 32
    hidden: int = 64
    n_filters: int = 128
    attention: str = "general"
    tie_embeddings: bool = False
    max_vocab: int = 512
    dtype: str = "float32"
    clamp_eps: float = EPS
    clip_norm: float = 5.0
    swap_prob: float = 0.5
    adv_weight: float = 1.0
    div_weight: float = 1.0
    eval_every: int = 100
    dev_limit: int = 200
    select_word_diff: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("init_steps", "adv_steps", "eval_every", "dev_limit"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        for name in ("lr_gen", "lr_critic"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, emb_dim=self.emb_dim, hidden=self.hidden,
                           n_filters=self.n_filters, attention=self.attention,
                           tie_embeddings=self.tie_embeddings, dtype=self.dtype, seed=self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


FULL_SCALE_PRESET = dict(init_steps=6000, adv_steps=8000, batch_size=36, hidden=600, emb_dim=300,
                    lr_gen=0.00012, lr_critic=0.0005)


@dataclass
class TrainLog:
    seed: int = 0
    records: list = field(default_factory=list)      # {"step", "loss", "value"}
    checkpoints: list = field(default_factory=list)  # {"step", "sari", "bleu", "fe_diff", "word_diff"}
    started: float = field(default_factory=time.time)

    def add(self, step: int, name: str, value: float) -> None:
        self.records.append({"step": step, "loss": name, "value": value})

    def losses(self, name: str) -> list[float]:
        return [r["value"] for r in self.records if r["loss"] == name]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", "seed": self.seed, "started": self.started}) + "\n")
            for r in self.records:
                fh.write(json.dumps({"kind": "loss", **r}) + "\n")
            for c in self.checkpoints:
                fh.write(json.dumps({"kind": "checkpoint", **c}) + "\n")

    @classmethod
    def read(cls, path) -> "TrainLog":
        out = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                kind = rec.pop("kind")
                if kind == "header":
                    out.seed, out.started = rec["seed"], rec["started"]
                elif kind == "loss":
                    out.records.append(rec)
                else:
                    out.checkpoints.append(rec)
        return out


def build_vocab(corpus: Corpus, max_vocab: int) -> Vocabulary:
    return Vocabulary.build(corpus.sentences(), max_size=max_vocab)


class Sampler:
    """Length-bucketed, per-epoch shuffled batches; batch k is a pure function of (seed, k)."""

    def __init__(self, data: Sequence, batch_size: int, seed: int, stream: int, pool: int = 20):
        if len(data) == 0:
            raise ValueError("cannot sample batches from an empty corpus side")
        self.data = data
        self.batch_size = min(batch_size, len(data))
        self.seed = seed
        self.stream = stream
        self.pool = pool
        self._epoch = -1
        self._batches: list = []

    def _build(self, epoch: int) -> None:
        rng = np.random.default_rng([self.seed, self.stream, epoch])
        idx = rng.permutation(len(self.data))
        bs = self.batch_size
        n_full = len(idx) // bs
        idx = idx[: n_full * bs]
        span = bs * self.pool
        batches = []
        for lo in range(0, len(idx), span):
            chunk = sorted(idx[lo:lo + span], key=lambda i: (len(self.data[i]), i))
            batches += [chunk[j:j + bs] for j in range(0, len(chunk), bs)]
        order = rng.permutation(len(batches))
        self._batches = [batches[i] for i in order]
        self._epoch = epoch

    @property
    def per_epoch(self) -> int:
        return len(self.data) // self.batch_size

    def batch(self, k: int) -> list:
        epoch, j = divmod(k, self.per_epoch)
        if epoch != self._epoch:
            self._build(epoch)
        return [self.data[i] for i in self._batches[j]]


class Trainer:
    """Owns a model state, both optimizers, the samplers and the log."""

    def __init__(self, corpus: Corpus, config: TrainingConfig, state: ModelState | None = None,
                 vocab: Vocabulary | None = None, embeddings: dict | None = None,
                 dev: Sequence[EvalInstance] | None = None):
        config.validate()
        if not corpus.simple or not corpus.complex:
            raise ValueError("both corpus sides must be non-empty")
        if config.mode == "semisupervised" and not corpus.parallel_simple:
            raise ValueError("semi-supervised training needs a non-empty parallel set")
        self.cfg = config
        if state is None:
            vocab = vocab or build_vocab(corpus, config.max_vocab)
            state = ModelState(config.model_config(len(vocab)), vocab=vocab, embeddings=embeddings)
        self.state = state
        v = state.vocab
        self.S = [v.encode(s) for s in corpus.simple]
        self.D = [v.encode(s) for s in corpus.complex]
        self.P = [(v.encode(c), v.encode(s)) for c, s in corpus.parallel]
        seed = config.seed
        self.sampler_S = Sampler(self.S, config.batch_size, seed, 1)
        self.sampler_D = Sampler(self.D, config.batch_size, seed, 2)
        self.sampler_P = Sampler(self.P, config.batch_size, seed, 3) if self.P else None
        self.opt_gen = Adam(config.lr_gen)
        self.opt_critic = Adam(config.lr_critic)
        self.step = 0
        self.log = TrainLog(seed=seed)
        self.dev = list(dev)[: config.dev_limit] if dev else []
        self.update_trace: list[tuple] = []
        self.on_update: Callable | None = None
        self.best: dict | None = None
        self.out_dir: Path | None = None

    # -- updates -------------------------------------------------------------
    def _update(self, name: str, loss: T.Tensor, groups: Sequence[str], opt: Adam, phase: str) -> None:
        params = self.state.groups_params(groups)
        before = self.on_update and {k: v.data.copy() for k, v in self.state.params.items()}
        self.state.zero_grad()
        T.backward(loss)
        # grads may also land on parameters outside the update set; they are discarded
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        clip_grad_norm(params, self.cfg.clip_norm)
        opt.step(params)
        self.state.zero_grad()
        self.update_trace.append((phase, self.step, name, tuple(groups)))
        if self.on_update:
            self.on_update(phase, self.step, name, tuple(groups), before, self.state)

    def _noise_seed(self, tag: int) -> list:
        return [self.cfg.seed, 97, tag, self.step]

    def _batches(self):
        return self.sampler_S.batch(self.step), self.sampler_D.batch(self.step)

    def _denoise(self, phase, bS, bD) -> None:
        loss = denoising_loss(bS, bD, self._noise_seed(0), self.state, self.cfg.swap_prob, self.cfg.clamp_eps)
        self.log.add(self.step, "L_denoi", loss.item())
        self._update("denoise", loss, ("E", "Gs", "Gd"), self.opt_gen, phase)

    def _critic(self, phase, bS, bD) -> None:
        eps = self.cfg.clamp_eps
        with T.no_grad():
            tr = compute_traces(self.state, bS, bD, eps)
        adv_d, div_c = critic_losses(self.state, tr, eps)
        self.log.add(self.step, "L_adv_D", adv_d.item())
        self.log.add(self.step, "L_div_C", div_c.item())
        self._update("critic", adv_d + div_c, ("D", "C"), self.opt_critic, phase)

    def init_iteration(self) -> None:
        bS, bD = self._batches()
        self._denoise("init", bS, bD)
        eps = self.cfg.clamp_eps
        ls, _ = path_nll(self.state, "Gs", bS, bS, eps)
        ld, _ = path_nll(self.state, "Gd", bD, bD, eps)
        rec = ls + ld
        self.log.add(self.step, "L_rec", rec.item())
        self._update("reconstruct", rec, ("E", "Gs", "Gd"), self.opt_gen, "init")
        self._critic("init", bS, bD)
        self.step += 1

    def adv_iteration(self) -> None:
        cfg = self.cfg
        bS, bD = self._batches()
        self._denoise("adv", bS, bD)

        tr = compute_traces(self.state, bS, bD, cfg.clamp_eps)
        rec = tr.nll_s + tr.nll_d
        adv_g, div_g = generator_critic_losses(self.state, tr, cfg.clamp_eps)
        self.log.add(self.step, "L_rec", rec.item())
        self.log.add(self.step, "L_adv_Gs", adv_g.item())
        self.log.add(self.step, "L_div_Gs", div_g.item())
        loss = rec
        if cfg.variant != "UNTS-adv":
            loss = loss + cfg.adv_weight * adv_g
        if cfg.variant != "UNTS-div":
            loss = loss + cfg.div_weight * div_g
        self._update("generator", loss, ("E", "Gs", "Gd"), self.opt_gen, "adv")

        self._critic("adv", bS, bD)

        if cfg.mode == "semisupervised":
            pairs = self.sampler_P.batch(self.step)
            cx = [c for c, _ in pairs]
            sx = [s for _, s in pairs]
            ce_s, _ = path_nll(self.state, "Gs", cx, sx, cfg.clamp_eps)
            self.log.add(self.step, "L_cross_s", ce_s.item())
            self._update("cross_s", ce_s, ("E", "Gs"), self.opt_gen, "adv")
            ce_d, _ = path_nll(self.state, "Gd", sx, cx, cfg.clamp_eps)
            self.log.add(self.step, "L_cross_d", ce_d.item())
            self._update("cross_d", ce_d, ("E", "Gd"), self.opt_gen, "adv")
        self.step += 1

    # -- evaluation / selection ----------------------------------------------
    def evaluate_dev(self) -> EvalReport | None:
        if not self.dev:
            return None
        preds = simplify_sentences([i.source for i in self.dev], self.state)
        inst = [EvalInstance(i.source, p, i.references) for i, p in zip(self.dev, preds)]
        return evaluate(inst)

    def checkpoint(self) -> None:
        rep = self.evaluate_dev()
        if rep is None:
            return
        row = {"step": self.step, **rep.metrics()}
        self.log.checkpoints.append(row)
        log.info("step %d dev %s", self.step, {k: round(v, 3) for k, v in rep.metrics().items()})
        if self._better(row):
            self.best = {"row": row, "params": self.state.snapshot()}
        if self.out_dir is not None:
            self.save(self.out_dir / "checkpoints" / f"step{self.step:06d}.npz")

    def _better(self, row: dict) -> bool:
        if self.best is None:
            return True
        thr = self.cfg.select_word_diff
        cur = self.best["row"]
        ok_new, ok_cur = row["word_diff"] > thr, cur["word_diff"] > thr
        if ok_new != ok_cur:
            return ok_new
        return row["sari"] > cur["sari"]

    def _maybe_checkpoint(self, end: bool = False) -> None:
        every = self.cfg.eval_every
        if every and (self.step % every == 0 or end):
            if not self.log.checkpoints or self.log.checkpoints[-1]["step"] != self.step:
                self.checkpoint()

    def run_phase(self, phase: str, n_steps: int) -> None:
        fn = self.init_iteration if phase == "init" else self.adv_iteration
        for _ in range(n_steps):
            fn()
            self._maybe_checkpoint()

    def train(self, out_dir=None) -> tuple[ModelState, TrainLog]:
        """Full schedule from the current step; selects the best dev checkpoint."""
        if out_dir is not None:
            self.out_dir = Path(out_dir)
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.step == 0:
            self._maybe_checkpoint()
        total_init = self.cfg.init_steps
        if self.step < total_init:
            self.run_phase("init", total_init - self.step)
        total = total_init + self.cfg.adv_steps
        if self.step < total:
            self.run_phase("adv", total - self.step)
        self._maybe_checkpoint(end=True)
        if self.best is not None:
            self.state.restore(self.best["params"])
        if self.out_dir is not None:
            self.log.write(self.out_dir / "trainlog.jsonl")
            if self.best is not None:
                sel = self.best["row"]
                (self.out_dir / "selected.txt").write_text(
                    f"step{sel['step']:06d}.npz\n" + json.dumps(sel) + "\n", encoding="utf-8")
            save_checkpoint(self.out_dir / "model.npz", self.state, self.step,
                            extra_meta={"training": asdict(self.cfg),
                                        "selected": self.best["row"] if self.best else None})
        return self.state, self.log

    # -- persistence -----------------------------------------------------------
    def save(self, path) -> None:
        arrays = {**self.opt_gen.state_arrays("opt_gen"), **self.opt_critic.state_arrays("opt_critic")}
        save_checkpoint(path, self.state, self.step, extra_meta={"training": asdict(self.cfg)},
                        extra_arrays=arrays)

    @classmethod
    def resume(cls, path, corpus: Corpus, dev=None) -> "Trainer":
        state, meta, arrays = load_checkpoint(path)
        cfg = TrainingConfig.from_dict(meta["training"])
        tr = cls(corpus, cfg, state=state, dev=dev)
        params = list(state.params.values())
        tr.opt_gen.load_state_arrays(arrays, "opt_gen", params)
        tr.opt_critic.load_state_arrays(arrays, "opt_critic", params)
        tr.step = int(meta["step"])
        return tr


# ---------------------------------------------------------------------------
# functional entry points


def init_phase(corpus: Corpus, state: ModelState, config: TrainingConfig, **kw) -> ModelState:
    tr = Trainer(corpus, config, state=state, **kw)
    tr.run_phase("init", config.init_steps)
    return tr.state


def adversarial_phase(corpus: Corpus, state: ModelState, config: TrainingConfig, **kw) -> ModelState:
    tr = Trainer(corpus, config, state=state, **kw)
    tr.run_phase("adv", config.adv_steps)
    return tr.state


def train_unsupervised(corpus: Corpus, config: TrainingConfig, dev=None, out_dir=None, embeddings=None,
                       vocab=None) -> tuple[ModelState, TrainLog]:
    if config.mode != "unsupervised":
        config = TrainingConfig(**{**asdict(config), "mode": "unsupervised"})
    tr = Trainer(corpus, config, dev=dev, embeddings=embeddings, vocab=vocab)
    return tr.train(out_dir)


def train_semisupervised(corpus: Corpus, config: TrainingConfig, dev=None, out_dir=None, embeddings=None,
                         vocab=None) -> tuple[ModelState, TrainLog]:
    if not corpus.parallel_simple:
        raise ValueError("semi-supervised training needs a non-empty parallel set")
    config = TrainingConfig(**{**asdict(config), "mode": "semisupervised"})
    tr = Trainer(corpus, config, dev=dev, embeddings=embeddings, vocab=vocab)
    return tr.train(out_dir)


def ablate(variant: str, corpus: Corpus, config: TrainingConfig, **kw) -> tuple[ModelState, TrainLog]:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    config = TrainingConfig(**{**asdict(config), "variant": variant})
    if config.mode == "semisupervised":
        return train_semisupervised(corpus, config, **kw)
    return train_unsupervised(corpus, config, **kw)
