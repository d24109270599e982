import numpy as np
import pytest

from nlgqe.data import Dataset, MeaningRepresentation, QEInstance, TextOutput, build_vocabulary
from nlgqe.model import QEModel
from nlgqe.nn.autodiff import Tape, backward

WORDS = "the X-name is a cheap pub near X-near serving italian food with high rating in riverside , .".split()
ATTRS = ["name", "food", "area", "price_range", "near"]


def random_mr(rng):
    k = int(rng.integers(1, 4))
    chosen = rng.choice(len(ATTRS), size=k, replace=False)
    slots = tuple((ATTRS[i], str(rng.choice(WORDS[:10]))) for i in sorted(chosen))
    return MeaningRepresentation(str(rng.choice(["inform", "recommend"])), slots)


def random_text(rng, lo=3, hi=12):
    return TextOutput.from_tokens([str(w) for w in rng.choice(WORDS, size=int(rng.integers(lo, hi)))])


def random_pairs(rng, n):
    """``n`` random (MR, text) pairs over a small fixed word list."""
    return [(random_mr(rng), random_text(rng)) for _ in range(n)]


def toy_model(width=8, seed=0, **kw):
    rng = np.random.default_rng(99)
    insts = [QEInstance.rated(mr, text, 3) for mr, text in random_pairs(rng, 30)]
    vocab = build_vocabulary([Dataset(tuple(insts))])
    return QEModel.create(vocab, width, seed=seed, **kw)


def gradient_errors(model, instance, n_entries=3, eps=1e-5, dropout_seed=7, rng=None):
    """Relative errors between tape gradients and central differences.

    Dropout stays active; the same dropout stream is replayed for every
    evaluation so the loss is a smooth function of the parameters. For each
    parameter tensor, ``n_entries`` random entries with a nonzero tape
    gradient are probed.

    The relative error is ``|a - n| / max(|a|, |n|, 1e-6 * max(1, |L|))``.
    Central differences carry roundoff of about ``eps_machine * |L| / h``,
    so gradients far below that scale cannot be resolved at ``h = 1e-5``;
    the floor keeps such entries from reporting pure noise.
    """
    rng = rng or np.random.default_rng(0)
    params = model.params.tensors()

    def loss_value():
        return model.batch_loss([instance], train_mode=True, rng=np.random.default_rng(dropout_seed)).item()

    with Tape() as tape:
        loss = model.batch_loss([instance], train_mode=True, rng=np.random.default_rng(dropout_seed))
    grads = backward(tape, loss, params=params)
    floor = 1e-6 * max(1.0, abs(loss.item()))
    errors = []
    for p in params:
        g = grads[p.name]
        candidates = np.flatnonzero(g)
        if candidates.size == 0:
            continue
        for flat in rng.choice(candidates, size=min(n_entries, candidates.size), replace=False):
            idx = np.unravel_index(flat, g.shape)
            old = p.value[idx]
            p.value[idx] = old + eps
            up = loss_value()
            p.value[idx] = old - eps
            down = loss_value()
            p.value[idx] = old
            num = (up - down) / (2 * eps)
            errors.append((abs(g[idx] - num) / max(abs(g[idx]), abs(num), floor), p.name, float(g[idx]), num))
    return errors


@pytest.fixture
def model():
    return toy_model()


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES = {}


def record_acceptance(criterion, passed, detail):
    """Remember one PASS/FAIL line; the terminal summary prints them in order."""
    status = "PASS" if passed else "FAIL"
    if passed is None:
        status = "SKIP"
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {status}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
