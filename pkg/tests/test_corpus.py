import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlgqe.corpus import (
    SplitSpec, cv_folds, load_ratings, load_rankings, ranked_pairs, read_jsonl, split_by_mr, write_jsonl,
)
from nlgqe.data import Dataset, MeaningRepresentation, QEInstance
from nlgqe.errors import DataError, SplitError

RATINGS_HEADER = "mr\tsystem\ttext\trating\n"


def rankings_file(tmp_path, rows, triples=5):
    header = "mr" + "".join(f"\tsystem_{k}\ttext_{k}\trank_{k}" for k in range(1, triples + 1))
    path = tmp_path / "rank.tsv"
    path.write_text(header + "\n" + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


def record(ranks, mr="inform(name=x)"):
    return mr + "".join(f"\ts{k}\toutput {k}\t{r}" for k, r in enumerate(ranks))


def test_load_ratings(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text(RATINGS_HEADER + "inform(name=x)\tlols\tx is here .\t5\n"
                    "inform(name=y)\trnnlg\ty is there .\t2.5\n", encoding="utf-8")
    ds = load_ratings(path, "naturalness")
    assert len(ds) == 2 and ds.criterion == "naturalness"
    assert [i.rating for i in ds] == [5.0, 2.5]
    assert not any(i.is_ranking for i in ds)


def test_load_ratings_header_only(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text(RATINGS_HEADER)
    assert len(load_ratings(path)) == 0


def test_load_ratings_errors_name_line(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text(RATINGS_HEADER + "inform(name=x)\ts\tok\t3\ninform(name=x)\ts\tbad\t7\n")
    with pytest.raises(DataError, match="line 3"):
        load_ratings(path)
    path.write_text(RATINGS_HEADER + "inform(name=x)\ts\tbad\n")
    with pytest.raises(DataError, match="line 2"):
        load_ratings(path)
    path.write_text(RATINGS_HEADER + "inform(name=x)\ts\tbad\tgood\n")
    with pytest.raises(DataError, match="line 2"):
        load_ratings(path)


def test_rankings_with_one_tie(tmp_path):
    ds = load_rankings(rankings_file(tmp_path, [record([1, 2, 2, 4, 5])]))
    assert len(ds) == 9
    assert all(i.is_ranking for i in ds)


def test_rankings_all_tied(tmp_path):
    assert len(load_rankings(rankings_file(tmp_path, [record([3, 3, 3, 3, 3])]))) == 0


def test_rankings_short_records(tmp_path):
    rows = [record([2, 1]), record([1, 1, 2])]
    ds = load_rankings(rankings_file(tmp_path, rows))
    assert len(ds) == 1 + 2
    assert ds.instances[0].text_a.raw == "output 1"


def test_rankings_errors(tmp_path):
    with pytest.raises(DataError, match="line 2"):
        load_rankings(rankings_file(tmp_path, [record([1])]))
    with pytest.raises(DataError, match="line 2"):
        load_rankings(rankings_file(tmp_path, ["inform(name=x)\ta\tt\tfirst\tb\tu\t2"]))


@given(st.lists(st.integers(1, 5), min_size=2, max_size=5))
def test_pair_count_matches_brute_force(ranks):
    outputs = [(f"s{k}", f"t{k}", r) for k, r in enumerate(ranks)]
    pairs = ranked_pairs(outputs)
    expected = sum(1 for a, b in itertools.combinations(ranks, 2) if a != b)
    assert len(pairs) == expected
    assert all(better[2] < worse[2] for better, worse in pairs)


def test_jsonl_round_trip(tmp_path):
    mr = MeaningRepresentation("inform", (("name", "X-name"),))
    ds = Dataset((
        QEInstance.rated(mr, "X-name is good .", 4.5, source_tag="human:a"),
        QEInstance.ranked(mr, "X-name is good .", "X-name good good .", is_synthetic=True, source_tag="synth"),
    ))
    path = tmp_path / "d.jsonl"
    write_jsonl(ds, path)
    assert read_jsonl(path).instances == ds.instances


def test_jsonl_bad_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"mr": "inform()", "text_a": "x", "rating": 3, "is_ranking": false}\n{not json}\n')
    with pytest.raises(DataError, match="line 2"):
        read_jsonl(path)


def grid_dataset(n_mrs, per_mr):
    insts = [QEInstance.rated(MeaningRepresentation("inform", (("name", f"v{m}"),)), f"text {m} {k}", 3)
             for m in range(n_mrs) for k in range(per_mr)]
    return Dataset(tuple(insts))


def mr_set(ds):
    return {i.mr.canonical() for i in ds}


def test_split_exact_proportions():
    sections = split_by_mr(grid_dataset(10, 3), SplitSpec((8, 1, 1), seed=3))
    assert [len(mr_set(s)) for s in sections] == [8, 1, 1]
    assert sum(len(s) for s in sections) == 30


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(1, 4), st.integers(0, 1000))
def test_split_mr_disjoint_and_complete(n_mrs, per_mr, seed):
    ds = grid_dataset(n_mrs, per_mr)
    sections = split_by_mr(ds, SplitSpec(seed=seed))
    sets = [mr_set(s) for s in sections]
    assert all(not (a & b) for a, b in itertools.combinations(sets, 2))
    assert sorted(i.text_a.raw for s in sections for i in s) == sorted(i.text_a.raw for i in ds)
    assert split_by_mr(ds, SplitSpec(seed=seed)) == sections


def test_split_errors():
    with pytest.raises(SplitError):
        split_by_mr(Dataset())
    with pytest.raises(SplitError):
        split_by_mr(grid_dataset(2, 5))


def test_cv_folds_partition():
    ds = grid_dataset(23, 2)
    folds = cv_folds(ds, k=5, seed=1)
    assert len(folds) == 5
    tests = [mr_set(t) for _, _, t in folds]
    assert set().union(*tests) == mr_set(ds)
    assert sum(len(t) for t in tests) == len(mr_set(ds))
    for i, (train, dev, test) in enumerate(folds):
        assert mr_set(dev) == tests[(i + 1) % 5]
        assert not (mr_set(train) & (mr_set(dev) | mr_set(test)))
        assert len(train) + len(dev) + len(test) == len(ds)


def test_cv_train_share_matches_nem_scale():
    # 2,460 instances, one per MR: training folds hold three fifths of the data
    folds = cv_folds(grid_dataset(2460, 1), k=5, seed=0)
    assert all(len(train) == 1476 for train, _, _ in folds)


def test_cv_too_few_mrs():
    with pytest.raises(SplitError):
        cv_folds(grid_dataset(4, 3), k=5)
