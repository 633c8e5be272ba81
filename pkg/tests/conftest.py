import numpy as np
import pytest

from unts import tensor as T
from unts.model import PRESETS, ModelConfig, ModelState
from unts.text import Vocabulary

TOY_WORDS = ["the", "cat", "dog", "sat", "ran", "big", "red", "."]   # 4 reserved + 8 = vocab 12


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-10)
    return float(num / den)


def numeric_grad(f, x: T.Tensor, h: float = 1e-6, max_entries: int | None = None, rng=None) -> tuple:
    """Central differences of scalar f() w.r.t. x.data; optionally on a random subset of entries."""
    flat = x.data.reshape(-1)
    idx = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
    out = np.zeros(len(idx))
    for j, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        fp = f().item()
        flat[i] = old - h
        fm = f().item()
        flat[i] = old
        out[j] = (fp - fm) / (2 * h)
    return idx, out


def check_grads(f, params, h: float = 1e-6, max_entries=None, rng=None) -> float:
    """Worst relative error between backward() and central differences over ``params``."""
    for p in params:
        p.grad = None
    T.backward(f())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        idx, num = numeric_grad(f, p, h, max_entries, rng)
        worst = max(worst, rel_err(analytic.reshape(-1)[idx], num))
    return worst


@pytest.fixture
def toy_vocab():
    return Vocabulary(TOY_WORDS)


def make_toy_state(seed: int = 0, **overrides) -> ModelState:
    vocab = Vocabulary(TOY_WORDS)
    kw = {**PRESETS["toy"], "vocab_size": len(vocab), "seed": seed, "init_scale": 0.5, **overrides}
    return ModelState(ModelConfig(**kw), vocab=vocab)


@pytest.fixture
def toy_state():
    return make_toy_state()


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion, printed after the run

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
