import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlgqe.data import MeaningRepresentation, TextOutput
from nlgqe.synth import (
    word_edit_distance,
    EDIT_OPS, CorruptionDictionary, Provenance, SyntheticSource, apply_edit, build_corruption_dictionary,
    corrupt, corrupt_tokens, generate, lowered_score, sources_from_dataset, synth_pairs, synth_ratings,
)
from nlgqe.data import Dataset, QEInstance

FIG3 = "house of nanking serves chinese food ."
MR = MeaningRepresentation("inform", (("name", "X-name"), ("food", "chinese")))


def edit_distance(a, b):
    """Word-level Levenshtein distance by dynamic programming."""
    d = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        prev, d[0] = d[0], i
        for j in range(1, len(b) + 1):
            cur = min(d[j] + 1, d[j - 1] + 1, prev + (a[i - 1] != b[j - 1]))
            prev, d[j] = d[j], cur
    return d[len(b)]


def test_edit_distance_oracle_itself():
    assert edit_distance("a b c".split(), "a c".split()) == 1
    assert edit_distance("a b".split(), "b a".split()) == 2
    assert edit_distance([], "x y".split()) == 2


def test_dictionary_contents():
    assert build_corruption_dictionary(["a b ."]).pool == ("a", "b")
    assert len(build_corruption_dictionary([FIG3])) == 6
    pool = build_corruption_dictionary(["X-name is near X-near ."]).pool
    assert pool == ("is", "near")
    with pytest.raises(ValueError):
        build_corruption_dictionary([". ,"])


def test_zero_errors_is_identity():
    d = build_corruption_dictionary([FIG3])
    text = TextOutput(FIG3)
    assert corrupt(text, 0, d, 1) is text
    assert corrupt(FIG3, 0, d, 1) == FIG3


def test_figure3_single_replacement_reachable():
    d = CorruptionDictionary(("restaurant",))
    target = "house of nanking restaurant chinese food ."
    hits = [seed for seed in range(300) if corrupt(FIG3, 1, d, seed) == target]
    assert hits
    for seed in range(300):
        out = corrupt(FIG3, 1, d, seed).split()
        assert edit_distance(FIG3.split(), out) == 1


@pytest.mark.parametrize("op", EDIT_OPS)
def test_each_edit_is_one_word_edit(op):
    d = build_corruption_dictionary(["apple pear plum"])
    tokens = FIG3.split()
    for seed in range(50):
        out = apply_edit(tokens, op, d, np.random.default_rng(seed))
        assert edit_distance(tokens, out) == 1


def test_targets_avoid_articles_and_punctuation():
    tokens = "the cat sat on a mat .".split()
    for seed in range(200):
        out = apply_edit(tokens, "delete", None, np.random.default_rng(seed))
        assert "the" in out and "a" in out and "." in out


def test_fallback_to_any_token():
    out = apply_edit(["the", "."], "delete", None, np.random.default_rng(0))
    assert len(out) == 1


def test_never_deletes_last_token():
    d = CorruptionDictionary(("x",))
    for seed in range(100):
        assert corrupt_tokens(["word"], 4, d, np.random.default_rng(seed))


def test_replace_needs_dictionary():
    with pytest.raises(ValueError):
        apply_edit(["a", "b"], "replace", None, np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from("red green blue cat dog . the".split()), min_size=1, max_size=15),
       st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_edit_distance_bounded(tokens, n, seed):
    d = build_corruption_dictionary(["red green blue cat dog"])
    out = corrupt_tokens(tokens, n, d, np.random.default_rng(seed))
    assert edit_distance(tokens, out) <= n
    assert corrupt_tokens(tokens, n, d, np.random.default_rng(seed)) == out


def test_lowered_scores():
    assert lowered_score(6, 1) == 4
    assert lowered_score(5, 2) == 3
    assert lowered_score(2, 4) == 1
    assert lowered_score(6, 0) == 6


def test_synth_ratings_targets_non_increasing():
    d = build_corruption_dictionary([FIG3])
    for base in (6, 5, 3.5, 1):
        insts = synth_ratings(SyntheticSource(MR, FIG3, base), d, 0)
        ratings = [i.rating for i in insts]
        assert len(insts) == 4 and all(i.is_synthetic for i in insts)
        assert ratings == sorted(ratings, reverse=True)


def test_synth_pairs_shape():
    d = build_corruption_dictionary([FIG3])
    src = SyntheticSource(MR, FIG3)
    seen = set()
    for seed in range(30):
        pairs = synth_pairs(src, d, seed)
        assert len(pairs) == 9
        levels = [tuple(map(int, p.source_tag.split(":")[2].split("-"))) for p in pairs]
        assert len(set(levels)) == 9
        assert all(i < j for i, j in levels)
        assert {(0, k) for k in range(1, 5)} <= set(levels)
        for (i, j), p in zip(levels, pairs):
            assert edit_distance(FIG3.split(), p.text_a.tokens) <= i
        seen.update(levels)
    assert {(1, 3), (2, 4)} <= seen


def test_synth_pairs_requesting_too_many():
    d = build_corruption_dictionary([FIG3])
    assert len(synth_pairs(SyntheticSource(MR, FIG3), d, 0, n_random_pairs=50)) == 10


def test_generate_deterministic_per_source():
    d = build_corruption_dictionary([FIG3])
    srcs = [SyntheticSource(MR, FIG3), SyntheticSource(MR, "x is a chinese place .", 4)]
    a = generate(srcs, d, "both", seed=3)
    assert len(a) == 2 * (4 + 9)
    assert generate(srcs, d, "both", seed=3).instances == a.instances
    assert generate(srcs, d, "pairs", seed=3).has_rankings and not generate(srcs, d, "pairs", seed=3).has_ratings


def test_sources_from_dataset():
    ds = Dataset((
        QEInstance.rated(MR, FIG3, 5),
        QEInstance.rated(MR, FIG3, 5),
        QEInstance.ranked(MR, "good text", "bad text"),
        QEInstance.rated(MR, "skip me", 2, is_synthetic=True),
    ))
    srcs = sources_from_dataset(ds)
    assert [s.base_score for s in srcs] == [5, 6, 6]
    assert all(s.provenance is Provenance.SYSTEM_OUTPUT_TRAIN for s in srcs)


def test_source_score_range():
    with pytest.raises(ValueError):
        SyntheticSource(MR, FIG3, 7)


def test_library_edit_distance_matches_oracle():
    rng = np.random.default_rng(11)
    words = ["a", "b", "c", "d"]
    for _ in range(200):
        x = [words[k] for k in rng.integers(0, 4, rng.integers(0, 8))]
        y = [words[k] for k in rng.integers(0, 4, rng.integers(0, 8))]
        assert word_edit_distance(x, y) == edit_distance(x, y)
