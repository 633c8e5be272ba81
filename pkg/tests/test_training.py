from dataclasses import replace

import numpy as np
import pytest

from unts.evaluation import EvalInstance
from unts.losses import path_nll
from unts.model import load_checkpoint
from unts.synthetic import SynthConfig, generate_synthetic_corpus
from unts.text import Corpus
from unts.training import (ConfigError, Sampler, Trainer, TrainingConfig, TrainLog, ablate, adversarial_phase,
                           init_phase, train_semisupervised, train_unsupervised)

SC = generate_synthetic_corpus(SynthConfig(n_simple=64, n_complex=64, n_parallel=16, n_dev=8, n_test=8, emb_dim=8))
DEV = [EvalInstance(c, s, [s]) for c, s in SC.dev]
TINY = TrainingConfig(init_steps=2, adv_steps=2, batch_size=4, emb_dim=8, hidden=8, n_filters=4, dtype="float64",
                      eval_every=0, lr_gen=0.01, lr_critic=0.01)

CRITIC = {"conv", "D_head", "C_head"}


def _trainer(cfg=TINY, corpus=None, **kw):
    return Trainer(corpus or SC.corpus, cfg, embeddings=SC.embeddings, **kw)


def _changed_groups(before, state):
    out = set()
    for g, names in state.groups.items():
        if any(before[n].tobytes() != state.params[n].data.tobytes() for n in names):
            out.add(g)
    return out


def _instrument(tr):
    events = []

    def hook(phase, step, name, groups, before, state):
        events.append((phase, name, _changed_groups(before, state),
                       before["E/emb"].tobytes() == state.params["E/emb"].data.tobytes()))
    tr.on_update = hook
    return events


def _expand(groups):
    out = set()
    for g in groups:
        out |= {"conv", f"{g}_head"} if g in ("D", "C") else {g}
    return out


# ---------------------------------------------------------------------------
# update-set discipline


def test_init_iteration_update_sets():
    tr = _trainer()
    events = _instrument(tr)
    tr.init_iteration()
    assert [e[1] for e in events] == ["denoise", "reconstruct", "critic"]
    expected = [{"E", "Gs", "Gd"}, {"E", "Gs", "Gd"}, CRITIC]
    for (_, name, changed, emb_same), exp in zip(events, expected):
        assert changed == exp, name
        assert emb_same
    for (_, name, _, _), rec in zip(events, tr.update_trace):
        assert _expand(rec[3]) == {"E", "Gs", "Gd"} or _expand(rec[3]) == CRITIC


def test_adversarial_iteration_update_sets():
    tr = _trainer()
    events = _instrument(tr)
    tr.adv_iteration()
    assert [e[1] for e in events] == ["denoise", "generator", "critic"]
    assert [e[2] for e in events] == [{"E", "Gs", "Gd"}, {"E", "Gs", "Gd"}, CRITIC]
    assert all(e[3] for e in events)


def test_semisupervised_iteration_order_and_sets():
    tr = _trainer(replace(TINY, mode="semisupervised"))
    events = _instrument(tr)
    tr.adv_iteration()
    assert [e[1] for e in events] == ["denoise", "generator", "critic", "cross_s", "cross_d"]
    assert [e[2] for e in events] == [{"E", "Gs", "Gd"}, {"E", "Gs", "Gd"}, CRITIC, {"E", "Gs"}, {"E", "Gd"}]


@pytest.mark.parametrize("variant,weight", [("UNTS-div", "div_weight"), ("UNTS-adv", "adv_weight")])
def test_ablation_drops_term_from_generator(variant, weight):
    a = _trainer(replace(TINY, variant=variant))
    b = _trainer(replace(TINY, **{weight: 0.0}))
    full = _trainer(TINY)
    for t in (a, b, full):
        t.adv_iteration()
    for k in a.state.params:
        assert a.state.params[k].data.tobytes() == b.state.params[k].data.tobytes(), k
    assert any(a.state.params[k].data.tobytes() != full.state.params[k].data.tobytes() for k in a.state.params)


def test_zero_steps_leave_state_unchanged():
    tr = _trainer()
    snap = tr.state.snapshot()
    init_phase(SC.corpus, tr.state, replace(TINY, init_steps=0))
    adversarial_phase(SC.corpus, tr.state, replace(TINY, adv_steps=0))
    for k, v in snap.items():
        assert v.tobytes() == tr.state.params[k].data.tobytes()


# ---------------------------------------------------------------------------
# determinism, resume, selection


def test_same_seed_same_losses():
    a, b = _trainer(), _trainer()
    a.train()
    b.train()
    assert a.log.records == b.log.records


def test_resume_is_bitwise(tmp_path):
    cfg = replace(TINY, init_steps=2, adv_steps=3)
    ref = _trainer(cfg)
    ref.train()

    part = _trainer(cfg)
    for _ in range(3):
        part.init_iteration() if part.step < cfg.init_steps else part.adv_iteration()
    part.save(tmp_path / "mid.npz")
    resumed = Trainer.resume(tmp_path / "mid.npz", SC.corpus)
    resumed.train()
    tail = [r for r in ref.log.records if r["step"] >= 3]
    assert resumed.log.records == tail
    for k, p in ref.state.params.items():
        assert p.data.tobytes() == resumed.state.params[k].data.tobytes()


def test_checkpoints_and_selection(tmp_path):
    cfg = replace(TINY, eval_every=2)
    state, log = _trainer(cfg, dev=DEV).train(tmp_path)
    steps = [c["step"] for c in log.checkpoints]
    assert steps == [0, 2, 4]
    assert all(set(c) == {"step", "sari", "bleu", "fe_diff", "word_diff"} for c in log.checkpoints)
    assert (tmp_path / "selected.txt").is_file() and (tmp_path / "trainlog.jsonl").is_file()
    back = TrainLog.read(tmp_path / "trainlog.jsonl")
    assert back.records == log.records and back.checkpoints == log.checkpoints
    loaded, meta, _ = load_checkpoint(tmp_path / "model.npz")
    assert meta["selected"]["step"] in steps


def test_selection_rule():
    tr = _trainer(replace(TINY, select_word_diff=0.5))
    rows = [{"step": 0, "sari": 80, "word_diff": 0.1}, {"step": 1, "sari": 40, "word_diff": 1.0},
            {"step": 2, "sari": 50, "word_diff": 2.0}, {"step": 3, "sari": 90, "word_diff": 0.0}]
    for r in rows:
        if tr._better(r):
            tr.best = {"row": r}
    assert tr.best["row"]["step"] == 2


def test_sampler_is_pure_function_of_index():
    data = [[i] * (1 + i % 5) for i in range(37)]
    s1, s2 = Sampler(data, 4, seed=3, stream=1), Sampler(data, 4, seed=3, stream=1)
    forward = [s1.batch(k) for k in range(30)]
    backward = [s2.batch(k) for k in reversed(range(30))][::-1]
    assert forward == backward
    epoch0 = sorted(x[0] for k in range(s1.per_epoch) for x in s1.batch(k))
    assert len(set(epoch0)) == len(epoch0) == 36


# ---------------------------------------------------------------------------
# errors and semi-supervised behaviour


def test_semisupervised_needs_pairs():
    empty = Corpus(simple=SC.corpus.simple, complex=SC.corpus.complex)
    with pytest.raises(ValueError):
        train_semisupervised(empty, TINY)


def test_unknown_variant_and_mode():
    with pytest.raises(ConfigError):
        ablate("UNTS-xyz", SC.corpus, TINY)
    with pytest.raises(ConfigError):
        _trainer(replace(TINY, mode="weird"))
    with pytest.raises(ConfigError):
        _trainer(replace(TINY, lr_gen=0.0))


def test_empty_side_rejected():
    with pytest.raises(ValueError):
        _trainer(corpus=Corpus(simple=SC.corpus.simple, complex=[]))


def test_identity_pairs_reduce_reconstruction():
    sents = SC.corpus.simple[:8]
    corpus = Corpus(simple=SC.corpus.simple, complex=SC.corpus.complex, parallel_simple=sents,
                    parallel_complex=sents)
    tr = _trainer(replace(TINY, mode="semisupervised", batch_size=8), corpus=corpus)
    ids = [tr.state.vocab.encode(s) for s in sents]

    def rec():
        return (path_nll(tr.state, "Gs", ids, ids)[0] + path_nll(tr.state, "Gd", ids, ids)[0]).item()

    before = rec()
    for _ in range(5):
        pairs = tr.sampler_P.batch(tr.step)
        loss = path_nll(tr.state, "Gs", [c for c, _ in pairs], [s for _, s in pairs])[0]
        tr._update("cross_s", loss, ("E", "Gs"), tr.opt_gen, "adv")
        loss = path_nll(tr.state, "Gd", [s for _, s in pairs], [c for c, _ in pairs])[0]
        tr._update("cross_d", loss, ("E", "Gd"), tr.opt_gen, "adv")
        tr.step += 1
    assert rec() < before


def test_unsupervised_wrapper_runs():
    state, log = train_unsupervised(SC.corpus, TINY, embeddings=SC.embeddings)
    assert max(r["step"] for r in log.records) == TINY.init_steps + TINY.adv_steps - 1
    assert log.losses("L_adv_Gs")


@pytest.mark.slow
def test_reconstruction_loss_decreases():
    cfg = replace(TINY, init_steps=150, adv_steps=0, lr_gen=0.005)
    _, log = train_unsupervised(SC.corpus, cfg, embeddings=SC.embeddings)
    rec = log.losses("L_rec")
    assert np.mean(rec[-50:]) < np.mean(rec[:50])
