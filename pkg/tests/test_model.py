import json

import numpy as np
import pytest

from conftest import gradient_errors, random_pairs, random_text, toy_model
from nlgqe.data import MeaningRepresentation, QEInstance, TextOutput, Vocabulary
from nlgqe.errors import CheckpointVersionError, CorruptCheckpointError, VocabularyMismatchError
from nlgqe.model import A_BETTER, B_BETTER, TIE, QEModel, load, save
from nlgqe.nn.autodiff import Tape, backward

MR = MeaningRepresentation("inform", (("name", "X-name"), ("food", "italian")))


def zero_model():
    m = toy_model()
    for t in m.params.tensors():
        t.value[...] = 0.0
    return m


def set_output_bias(model, value):
    """Make the network output the constant ``value``."""
    model.params.out_W.value[...] = 0.0
    model.params.out_b.value[...] = value


def test_shapes_follow_width():
    m = toy_model(width=50)
    p = m.params
    assert p.dense_W.shape == (200, 50)
    assert p.out_W.shape == (50, 1)
    assert p.mr_fwd.W.shape == (50, 150)
    assert len({t.name for t in p.tensors()}) == len(p.tensors())


def test_zero_network_scores_zero():
    m = zero_model()
    assert m.score(MR, "X-name serves italian food .") == 0.0
    assert m.score(MR, "") == 0.0


def test_score_is_deterministic_in_eval_mode(model):
    text = "X-name is a cheap pub ."
    assert model.score(MR, text) == model.score(MR, text)


def test_clamped_scores():
    m = toy_model(clamp=True)
    set_output_bias(m, 9.0)
    assert m.score(MR, "x") == 6.0
    set_output_bias(m, -9.0)
    assert m.score(MR, "x") == 1.0


def test_rank_pair_identical_texts_tie(model):
    assert model.rank_pair(MR, "the pub .", "the pub .") == (TIE, 0.0)


def test_rank_pair_consistent_with_scores(model):
    a, b = "X-name is a cheap pub .", "pub pub the"
    decision, margin = model.rank_pair(MR, a, b)
    assert margin == pytest.approx(model.score(MR, a) - model.score(MR, b), abs=1e-12)
    assert decision == (A_BETTER if margin > 0 else B_BETTER)


def test_rank_n(model):
    assert model.rank_n(MR, ["only"]) == [0]
    texts = ["a pub", "the cheap pub near X-near", "italian food", "X-name , X-name"]
    scores = [model.score(MR, t) for t in texts]
    assert model.rank_n(MR, texts) == list(np.argsort(-np.array(scores), kind="stable"))
    with pytest.raises(ValueError):
        model.rank_n(MR, [])


def test_batched_and_single_scores_agree(model):
    rng = np.random.default_rng(0)
    pairs = random_pairs(rng, 12)
    batch = model.score_many([p[0] for p in pairs], [p[1] for p in pairs])
    single = [model.score(mr, t) for mr, t in pairs]
    assert np.allclose(batch, single, atol=1e-13)


def test_both_branches_share_parameters(model):
    """The second branch of a ranking instance is the same function as the first."""
    inst = QEInstance.ranked(MR, "X-name is a pub .", "pub the")
    with Tape():
        scores_a, scores_b, _ = model.forward([inst])
    assert scores_a.value[0] == pytest.approx(model.score(MR, "X-name is a pub ."), abs=1e-13)
    assert scores_b.value[0] == pytest.approx(model.score(MR, "pub the"), abs=1e-13)
    swapped = QEInstance.ranked(MR, "pub the", "X-name is a pub .")
    _, m1 = model.predict_instances([inst])
    _, m2 = model.predict_instances([swapped])
    assert m1[0] == pytest.approx(-m2[0], abs=1e-13)


def test_loss_fixtures():
    m = toy_model()
    set_output_bias(m, 3.0)
    assert m.batch_loss([QEInstance.rated(MR, "x y", 5)]).item() == pytest.approx(4.0)
    same = QEInstance.ranked(MR, "the pub .", "the pub .")
    assert m.batch_loss([same]).item() == pytest.approx(1.0)


def test_hinge_zero_beyond_margin(model):
    # rescaling the output weights rescales every margin
    inst = QEInstance.ranked(MR, "X-name is a cheap pub .", "pub")
    _, margins = model.predict_instances([inst])
    model.params.out_W.value *= 1.5 / margins[0]
    _, margins = model.predict_instances([inst])
    assert margins[0] == pytest.approx(1.5)
    assert model.batch_loss([inst]).item() == 0.0


def test_loss_masking_invariances():
    rng = np.random.default_rng(5)
    m = toy_model(seed=2)
    for mr, text in random_pairs(rng, 10):
        r = float(rng.uniform(1, 6))
        rated = m.batch_loss([QEInstance.rated(mr, text, r)]).item()
        # a rating instance never reads a second text: the loss equals (score - y)^2
        assert rated == pytest.approx((m.score(mr, text) - r) ** 2, rel=1e-12)
        other = random_text(rng)
        base = QEInstance.ranked(mr, text, other)
        l1 = m.batch_loss([base]).item()
        for fake in (1.0, 6.0):
            tagged = QEInstance(mr, text, other, None, True, source_tag=f"r{fake}")
            assert m.batch_loss([tagged]).item() == l1


def test_batch_loss_equals_mean_of_instance_losses(model):
    rng = np.random.default_rng(8)
    insts = []
    for k, (mr, text) in enumerate(random_pairs(rng, 9)):
        insts.append(QEInstance.rated(mr, text, 1 + k % 6) if k % 2 else QEInstance.ranked(mr, text, random_text(rng)))
    per = model.batch_loss(insts, reduce="none").value
    singles = [model.batch_loss([i]).item() for i in insts]
    assert np.allclose(per, singles, atol=1e-12)
    assert model.batch_loss(insts).item() == pytest.approx(np.mean(singles), abs=1e-12)


def test_rating_instances_skip_second_branch(model):
    inst = QEInstance.rated(MR, "X-name pub", 4)
    with Tape():
        scores_a, scores_b, rank_pos = model.forward([inst])
    assert scores_b is None and rank_pos == []
    loss, tape = model.instance_loss(inst)
    grads = backward(tape, loss, params=model.params.tensors())
    assert np.any(grads["text_fwd.U"] != 0) and np.any(grads["mr_bwd.W"] != 0)


def test_gradients_match_finite_differences_small():
    rng = np.random.default_rng(11)
    m = toy_model(width=6, seed=4)
    for mr, text in random_pairs(rng, 3):
        for inst in (QEInstance.rated(mr, text, 2.5), QEInstance.ranked(mr, text, random_text(rng))):
            assert max(e[0] for e in gradient_errors(m, inst, rng=rng)) < 1e-4


# ---------------------------------------------------------------- checkpoints

def test_round_trip_bit_exact(tmp_path, model):
    path = tmp_path / "m.ckpt"
    model.metadata = {"epoch": 3}
    save(model, path)
    loaded = load(path)
    rng = np.random.default_rng(0)
    pairs = random_pairs(rng, 20)
    a = model.score_many([p[0] for p in pairs], [p[1] for p in pairs])
    b = loaded.score_many([p[0] for p in pairs], [p[1] for p in pairs])
    assert np.array_equal(a, b)
    assert loaded.metadata == {"epoch": 3}
    assert loaded.vocab.itos == model.vocab.itos
    assert loaded.delex_rules == model.delex_rules


def test_identical_saves_identical_bytes(tmp_path):
    save(toy_model(seed=5), tmp_path / "a")
    save(toy_model(seed=5), tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_truncated_checkpoint(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:-17])
    with pytest.raises(CorruptCheckpointError):
        load(path)
    path.write_bytes(b"garbage")
    with pytest.raises(CorruptCheckpointError):
        load(path)


def test_flipped_payload_byte(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save(model, path)
    data = bytearray(path.read_bytes())
    data[-3] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptCheckpointError):
        load(path)


def test_version_mismatch(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save(model, path)
    data = path.read_bytes()
    path.write_bytes(data.replace(b"NLGQE-CHECKPOINT 1\n", b"NLGQE-CHECKPOINT 2\n", 1))
    with pytest.raises(CheckpointVersionError):
        load(path)


def _rewrite_header(path, edit):
    data = path.read_bytes()
    first = data.index(b"\n") + 1
    second = data.index(b"\n", first) + 1
    n = int(data[first:second])
    header = json.loads(data[second : second + n])
    edit(header)
    head = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(data[:first] + f"{len(head)}\n".encode() + head + data[second + n :])


def test_altered_vocabulary(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save(model, path)

    def swap(header):
        v = header["vocabulary"]
        v[-1], v[-2] = v[-2], v[-1]

    _rewrite_header(path, swap)
    with pytest.raises(VocabularyMismatchError):
        load(path)

    def swap_and_rehash(header):
        swap(header)
        header["vocabulary_sha256"] = Vocabulary(header["vocabulary"]).digest()

    save(model, path)
    _rewrite_header(path, swap_and_rehash)
    load(path)  # self-consistent file
    with pytest.raises(VocabularyMismatchError):
        load(path, vocab=model.vocab)

    def grow(header):
        header["vocabulary"].append("brand-new")
        header["vocabulary_sha256"] = Vocabulary(header["vocabulary"]).digest()

    save(model, path)
    _rewrite_header(path, grow)
    with pytest.raises(VocabularyMismatchError):
        load(path)


def test_checkpoint_errors_are_distinct():
    assert not issubclass(CorruptCheckpointError, CheckpointVersionError)
    assert not issubclass(CheckpointVersionError, CorruptCheckpointError)
    assert not issubclass(VocabularyMismatchError, (CorruptCheckpointError, CheckpointVersionError))
