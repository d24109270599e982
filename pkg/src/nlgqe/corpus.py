"""Corpus ingestion, canonical JSONL I/O, MR-disjoint splits and CV folds."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset, QEInstance, TextOutput, parse_mr
from .errors import DataError, SplitError

MAX_RANKED_OUTPUTS = 5


@dataclass(frozen=True)
class RawRatingsRecord:
    mr: str
    text: str
    rating: float
    system: Optional[str] = None
    source: Optional[str] = None

    def __post_init__(self):
        if not 1.0 <= self.rating <= 6.0:
            raise DataError(f"rating {self.rating} outside [1, 6]")


@dataclass(frozen=True)
class RawRankingRecord:
    mr: str
    outputs: tuple[tuple[str, str, int], ...]  # (system, text, rank)

    def __post_init__(self):
        if len(self.outputs) < 2:
            raise DataError("ranking record needs at least 2 outputs")
        if any(rank < 1 for _, _, rank in self.outputs):
            raise DataError("ranks must be positive")


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, ...] = (8, 1, 1)
    seed: int = 0

    def __post_init__(self):
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError("split ratios must be positive")


def _read_tsv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError("missing header", line=1)
    header = lines[0].rstrip("\r").split("\t")
    rows = [(no, line.rstrip("\r").split("\t")) for no, line in enumerate(lines[1:], 2) if line.strip()]
    return header, rows


def read_ratings_records(path) -> list[RawRatingsRecord]:
    header, rows = _read_tsv(path)
    if header[:4] != ["mr", "system", "text", "rating"]:
        raise DataError("ratings header must be mr, system, text, rating", line=1)
    records = []
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(fields)}", line=lineno)
        try:
            rating = float(fields[3])
        except ValueError:
            raise DataError(f"non-numeric rating {fields[3]!r}", line=lineno) from None
        if not 1.0 <= rating <= 6.0:
            raise DataError(f"rating {rating} outside [1, 6]", line=lineno)
        extra = fields[4] if len(fields) > 4 else None
        records.append(RawRatingsRecord(fields[0], fields[2], rating, fields[1] or None, extra))
    return records


def load_ratings(path, criterion: str = "quality") -> Dataset:
    """Load a ratings TSV (``mr system text rating``) as rating instances."""
    instances = []
    for rec in read_ratings_records(path):
        try:
            mr = parse_mr(rec.mr)
        except DataError as exc:
            raise DataError(f"bad MR in {path}: {exc}") from None
        instances.append(QEInstance.rated(mr, TextOutput(rec.text), rec.rating, source_tag=f"human:{rec.system or '?'}"))
    return Dataset(tuple(instances), criterion)


def read_ranking_records(path) -> list[RawRankingRecord]:
    header, rows = _read_tsv(path)
    triples = (len(header) - 1) // 3
    if header[0] != "mr" or (len(header) - 1) % 3 or not 1 <= triples <= MAX_RANKED_OUTPUTS:
        raise DataError("rankings header must be mr followed by system/text/rank triples", line=1)
    records = []
    for lineno, fields in rows:
        if len(fields) > len(header):
            raise DataError(f"too many fields ({len(fields)})", line=lineno)
        fields = fields + [""] * (len(header) - len(fields))
        outputs = []
        for k in range(triples):
            system, text, rank = fields[1 + 3 * k : 4 + 3 * k]
            if not text and not rank:
                continue
            try:
                rank_value = int(rank)
            except ValueError:
                raise DataError(f"non-numeric rank {rank!r}", line=lineno) from None
            outputs.append((system, text, rank_value))
        try:
            records.append(RawRankingRecord(fields[0], tuple(outputs)))
        except DataError as exc:
            raise DataError(str(exc), line=lineno) from None
    return records


def ranked_pairs(outputs):
    """All (better, worse) output pairs with strictly different ranks."""
    pairs = []
    for a, b in itertools.combinations(outputs, 2):
        if a[2] == b[2]:
            continue
        pairs.append((a, b) if a[2] < b[2] else (b, a))
    return pairs


def load_rankings(path, criterion: str = "quality") -> Dataset:
    """Load a rankings TSV and expand every record into pairwise instances.

    Tied outputs produce no pair; the better-ranked output becomes ``text_a``.
    """
    instances = []
    for rec in read_ranking_records(path):
        mr = parse_mr(rec.mr)
        for better, worse in ranked_pairs(rec.outputs):
            instances.append(
                QEInstance.ranked(
                    mr, TextOutput(better[1]), TextOutput(worse[1]),
                    source_tag=f"human:{better[0]}>{worse[0]}",
                )
            )
    return Dataset(tuple(instances), criterion)


# ---------------------------------------------------------------- JSONL

def instance_to_json(inst: QEInstance) -> dict:
    return {
        "mr": inst.mr.canonical(),
        "text_a": inst.text_a.raw,
        "text_b": None if inst.text_b is None else inst.text_b.raw,
        "rating": inst.rating,
        "is_ranking": inst.is_ranking,
        "is_synthetic": inst.is_synthetic,
        "source_tag": inst.source_tag,
    }


def instance_from_json(obj: dict) -> QEInstance:
    return QEInstance(
        mr=parse_mr(obj["mr"]),
        text_a=TextOutput(obj["text_a"]),
        text_b=None if obj.get("text_b") is None else TextOutput(obj["text_b"]),
        rating=obj.get("rating"),
        is_ranking=bool(obj["is_ranking"]),
        is_synthetic=bool(obj.get("is_synthetic", False)),
        source_tag=obj.get("source_tag", ""),
    )


def write_jsonl(dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset:
            fh.write(json.dumps(instance_to_json(inst), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_jsonl(path, criterion: str = "quality") -> Dataset:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                instances.append(instance_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"bad instance: {exc}", line=lineno) from None
            except DataError as exc:
                raise DataError(str(exc), line=lineno) from None
    return Dataset(tuple(instances), criterion)


# ---------------------------------------------------------------- splits

def _mr_groups(dataset: Dataset):
    groups: dict[str, list[int]] = {}
    for i, inst in enumerate(dataset):
        groups.setdefault(inst.mr.canonical(), []).append(i)
    return groups


def _section_sizes(n: int, ratios) -> list[int]:
    weights = np.asarray(ratios, dtype=float)
    exact = n * weights / weights.sum()
    sizes = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    # every section gets at least one MR
    for i in range(len(sizes)):
        if sizes[i] == 0:
            sizes[int(np.argmax(sizes))] -= 1
            sizes[i] = 1
    return sizes.tolist()


def _shuffled_mrs(dataset: Dataset, seed: int):
    groups = _mr_groups(dataset)
    keys = list(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    return [keys[i] for i in order], groups


def _subset(dataset, groups, keys) -> Dataset:
    idx = sorted(i for k in keys for i in groups[k])
    return dataset.with_instances(dataset.instances[i] for i in idx)


def split_by_mr(dataset: Dataset, spec: SplitSpec = SplitSpec()):
    """Partition ``dataset`` into MR-disjoint sections (train, dev, test by default)."""
    if len(dataset) == 0:
        raise SplitError("cannot split an empty dataset")
    keys, groups = _shuffled_mrs(dataset, spec.seed)
    if len(keys) < len(spec.ratios):
        raise SplitError(f"{len(keys)} distinct MRs cannot fill {len(spec.ratios)} sections")
    sections, start = [], 0
    for size in _section_sizes(len(keys), spec.ratios):
        sections.append(_subset(dataset, groups, keys[start : start + size]))
        start += size
    return tuple(sections)


def cv_folds(dataset: Dataset, k: int = 5, seed: int = 0):
    """MR-disjoint cross-validation folds as ``(train, dev, test)`` triples.

    Fold ``i`` tests on MR block ``i``, validates on block ``i+1`` (mod k)
    and trains on the rest.
    """
    if k < 3:
        raise SplitError("cross-validation needs k >= 3")
    if len(dataset) == 0:
        raise SplitError("cannot split an empty dataset")
    keys, groups = _shuffled_mrs(dataset, seed)
    if len(keys) < k:
        raise SplitError(f"{len(keys)} distinct MRs cannot form {k} folds")
    blocks = [list(b) for b in np.array_split(np.array(keys, dtype=object), k)]
    folds = []
    for i in range(k):
        dev_i = (i + 1) % k
        train_keys = [key for j, b in enumerate(blocks) if j not in (i, dev_i) for key in b]
        folds.append(
            (
                _subset(dataset, groups, train_keys),
                _subset(dataset, groups, blocks[dev_i]),
                _subset(dataset, groups, blocks[i]),
            )
        )
    return folds


def read_references(path) -> list:
    """Read a ``mr<TAB>text`` TSV of human references as ``(MR, text)`` pairs."""
    header, rows = _read_tsv(path)
    if header[:2] != ["mr", "text"]:
        raise DataError("references header must be mr, text", line=1)
    refs = []
    for lineno, fields in rows:
        if len(fields) < 2 or not fields[1].strip():
            raise DataError("expected an MR and a nonempty text", line=lineno)
        try:
            refs.append((parse_mr(fields[0]), fields[1]))
        except DataError as exc:
            raise DataError(str(exc), line=lineno) from None
    return refs
