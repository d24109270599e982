"""Synthetic training data made by corrupting texts with a known number of errors."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import RESERVED, Dataset, MeaningRepresentation, QEInstance, TextOutput, is_punctuation
from .delex import is_placeholder

ARTICLES = frozenset({"a", "an", "the"})
SCALE_MIN, SCALE_MAX = 1.0, 6.0

DELETE = "delete"
DUPLICATE_IN_PLACE = "duplicate_in_place"
DUPLICATE_RANDOM = "duplicate_random"
REPLACE = "replace"
INSERT = "insert"
EDIT_OPS = (DELETE, DUPLICATE_IN_PLACE, DUPLICATE_RANDOM, REPLACE, INSERT)


def is_article(token: str) -> bool:
    return token.lower() in ARTICLES


def is_preferred_target(token: str) -> bool:
    return not is_article(token) and not is_punctuation(token)


@dataclass(frozen=True)
class CorruptionDictionary:
    """Replacement/insertion word pool learned from training texts."""

    pool: tuple[str, ...]

    def __len__(self):
        return len(self.pool)


def _pool_token(token: str) -> bool:
    return not is_punctuation(token) and token not in RESERVED and not is_placeholder(token)


def build_corruption_dictionary(texts: Iterable) -> CorruptionDictionary:
    """Collect all non-punctuation, non-placeholder token types.

    ``texts`` may hold :class:`TextOutput` objects, raw strings or token lists.
    The pool is sorted so the result does not depend on input order.
    """
    types = set()
    for text in texts:
        if isinstance(text, TextOutput):
            tokens = text.tokens
        elif isinstance(text, str):
            tokens = TextOutput(text).tokens
        else:
            tokens = text
        types.update(t for t in tokens if _pool_token(t))
    if not types:
        raise ValueError("cannot build a corruption dictionary from an empty corpus")
    return CorruptionDictionary(tuple(sorted(types)))


def _pick_target(tokens, rng) -> int:
    candidates = [i for i, t in enumerate(tokens) if is_preferred_target(t)]
    if not candidates:
        candidates = range(len(tokens))
    return int(rng.choice(candidates))


def _random_word(dictionary, rng, avoid=None) -> str:
    pool = dictionary.pool
    if avoid is not None and len(pool) > 1:
        while True:
            word = pool[int(rng.integers(len(pool)))]
            if word != avoid:
                return word
    return pool[int(rng.integers(len(pool)))]


def apply_edit(tokens: list, op: str, dictionary, rng) -> list:
    """Apply one edit of type ``op`` to a copy of ``tokens``."""
    tokens = list(tokens)
    if op in (REPLACE, INSERT) and (dictionary is None or not dictionary.pool):
        raise ValueError(f"edit {op!r} needs a nonempty corruption dictionary")
    if op == INSERT:
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, _random_word(dictionary, rng))
        return tokens
    i = _pick_target(tokens, rng)
    if op == DELETE:
        del tokens[i]
    elif op == DUPLICATE_IN_PLACE:
        tokens.insert(i + 1, tokens[i])
    elif op == DUPLICATE_RANDOM:
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, tokens[i])
    elif op == REPLACE:
        tokens[i] = _random_word(dictionary, rng, avoid=tokens[i])
    else:
        raise ValueError(f"unknown edit {op!r}")
    return tokens


def word_edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Levenshtein distance over tokens (unit cost insert, delete, substitute)."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


MAX_EDIT_DRAWS = 20


def corrupt_tokens(tokens: Sequence[str], n_errors: int, dictionary: Optional[CorruptionDictionary], rng) -> list:
    """Apply exactly ``n_errors`` independently drawn edits.

    Deletion is never drawn while only one token remains. An edit that would
    merge with earlier ones (say, deleting the word a previous edit inserted)
    is redrawn, up to ``MAX_EDIT_DRAWS`` times, so the result usually sits at
    edit distance ``n_errors`` from the input and never further.
    """
    if n_errors < 0:
        raise ValueError("n_errors must be >= 0")
    original = list(tokens)
    tokens = list(tokens)
    if n_errors and not tokens:
        raise ValueError("cannot corrupt an empty text")
    for step in range(1, n_errors + 1):
        for _ in range(MAX_EDIT_DRAWS):
            ops = EDIT_OPS if len(tokens) > 1 else EDIT_OPS[1:]
            op = ops[int(rng.integers(len(ops)))]
            candidate = apply_edit(tokens, op, dictionary, rng)
            if word_edit_distance(original, candidate) == step:
                break
        tokens = candidate
    return tokens


def corrupt(text, n_errors: int, dictionary: Optional[CorruptionDictionary], rng):
    """Corrupt a :class:`TextOutput` (or string) with ``n_errors`` word edits."""
    rng = np.random.default_rng(rng)
    if isinstance(text, str):
        if n_errors == 0:
            return text
        return " ".join(corrupt_tokens(TextOutput(text).tokens, n_errors, dictionary, rng))
    if n_errors == 0:
        return text
    return TextOutput.from_tokens(corrupt_tokens(text.tokens, n_errors, dictionary, rng))


class Provenance(str, enum.Enum):
    SYSTEM_OUTPUT_TRAIN = "system_output_train"
    HUMAN_REFERENCE_TRAIN = "human_reference_train"
    HUMAN_REFERENCE_TEST = "human_reference_test"


@dataclass(frozen=True)
class SyntheticSource:
    mr: MeaningRepresentation
    text: TextOutput
    base_score: float = SCALE_MAX
    provenance: Provenance = Provenance.SYSTEM_OUTPUT_TRAIN

    def __post_init__(self):
        if not SCALE_MIN <= self.base_score <= SCALE_MAX:
            raise ValueError(f"base score {self.base_score} outside [1, 6]")
        if isinstance(self.text, str):
            object.__setattr__(self, "text", TextOutput(self.text))
        object.__setattr__(self, "provenance", Provenance(self.provenance))


def lowered_score(base: float, n_errors: int) -> float:
    """Target rating after ``n_errors`` errors.

    Each error costs one point; a top-of-scale base loses one extra point.
    Results are clamped to the scale floor.
    """
    penalty = n_errors + (1 if base == SCALE_MAX and n_errors > 0 else 0)
    return float(min(SCALE_MAX, max(SCALE_MIN, base - penalty)))


def synth_ratings(source: SyntheticSource, dictionary, rng, max_errors: int = 4) -> list[QEInstance]:
    rng = np.random.default_rng(rng)
    out = []
    for k in range(1, max_errors + 1):
        text = corrupt(source.text, k, dictionary, rng)
        out.append(
            QEInstance.rated(
                source.mr, text, lowered_score(source.base_score, k),
                is_synthetic=True, source_tag=f"synth:rating:{k}:{source.provenance.value}",
            )
        )
    return out


def synth_pairs(source: SyntheticSource, dictionary, rng, max_errors: int = 4, n_random_pairs: int = 5) -> list[QEInstance]:
    """Pairs of variants with different error counts, fewer errors first.

    Every level is paired with the clean text; ``n_random_pairs`` further
    pairs are drawn without replacement from the remaining level pairs.
    """
    rng = np.random.default_rng(rng)
    variants = [source.text] + [corrupt(source.text, k, dictionary, rng) for k in range(1, max_errors + 1)]
    pairs = [(0, k) for k in range(1, max_errors + 1)]
    rest = [(i, j) for i in range(1, max_errors + 1) for j in range(i + 1, max_errors + 1)]
    if n_random_pairs >= len(rest):
        pairs += rest
    elif n_random_pairs > 0:
        chosen = rng.choice(len(rest), size=n_random_pairs, replace=False)
        pairs += [rest[c] for c in sorted(chosen)]
    return [
        QEInstance.ranked(
            source.mr, variants[i], variants[j],
            is_synthetic=True, source_tag=f"synth:pair:{i}-{j}:{source.provenance.value}",
        )
        for i, j in pairs
    ]


def source_seed(global_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(global_seed), int(index)])


def generate(sources: Sequence[SyntheticSource], dictionary, mode: str = "both", seed: int = 0,
             max_errors: int = 4, n_random_pairs: int = 5, criterion: str = "quality") -> Dataset:
    """Synthesise instances for every source; ``mode`` is ratings, pairs or both.

    Each source draws from its own RNG derived from ``(seed, index)``.
    """
    if mode not in ("ratings", "pairs", "both"):
        raise ValueError(f"unknown synthesis mode {mode!r}")
    out = []
    for idx, src in enumerate(sources):
        rng = np.random.default_rng(source_seed(seed, idx))
        if mode in ("ratings", "both"):
            out.extend(synth_ratings(src, dictionary, rng, max_errors))
        if mode in ("pairs", "both"):
            out.extend(synth_pairs(src, dictionary, rng, max_errors, n_random_pairs))
    return Dataset(tuple(out), criterion)


def sources_from_dataset(dataset: Dataset, provenance=Provenance.SYSTEM_OUTPUT_TRAIN) -> list[SyntheticSource]:
    """Distinct (MR, text) sources from human-labelled instances.

    Rated texts keep their rating as base score; texts seen only in
    ranking instances get the top of the scale.
    """
    seen: dict[tuple, SyntheticSource] = {}
    for inst in dataset:
        if inst.is_synthetic:
            continue
        texts = [(inst.text_a, inst.rating)]
        if inst.text_b is not None:
            texts.append((inst.text_b, None))
        for text, rating in texts:
            if not text.tokens:
                continue
            key = (inst.mr.canonical(), text.tokens)
            if key in seen:
                continue
            base = SCALE_MAX if rating is None else rating
            seen[key] = SyntheticSource(inst.mr, text, base, provenance)
    return list(seen.values())


def sources_from_references(pairs: Iterable, provenance=Provenance.HUMAN_REFERENCE_TRAIN) -> list[SyntheticSource]:
    """Sources from (MR, reference text) pairs; references score top of scale."""
    return [SyntheticSource(mr, TextOutput(text) if isinstance(text, str) else text, SCALE_MAX, provenance)
            for mr, text in pairs]
