"""Domain types, tokenisation, MR linearisation and vocabularies."""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import DataError

PAD = "<pad>"
UNK = "<unk>"
SLOT = "<slot>"
RESERVED = (PAD, UNK, SLOT)

CRITERIA = ("quality", "naturalness", "informativeness")

_TOKEN_RE = re.compile(r"\w+(?:-\w+)*|'\w+|[^\w\s]")


def tokenize(raw: str) -> list[str]:
    """Lowercase ``raw`` and split it into word, clitic and punctuation tokens.

    >>> tokenize("It's family friendly.")
    ['it', "'s", 'family', 'friendly', '.']
    """
    return _TOKEN_RE.findall(raw.lower())


def is_punctuation(token: str) -> bool:
    return bool(token) and not any(ch.isalnum() for ch in token)


def normalize_attribute(name: str) -> str:
    return "_".join(name.strip().lower().split())


@dataclass(frozen=True)
class MeaningRepresentation:
    intent: str
    slots: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.intent or not self.intent.strip():
            raise DataError("MR intent must be nonempty")
        slots = tuple((str(a), "" if v is None else str(v)) for a, v in self.slots)
        for attr, _ in slots:
            if not attr.strip():
                raise DataError("MR attribute names must be nonempty")
        object.__setattr__(self, "slots", slots)

    def canonical(self) -> str:
        """Serialise to the canonical ``intent(attr="value",...)`` string.

        Two MRs are the same MR iff their canonical strings are equal.
        """
        parts = []
        for attr, value in self.slots:
            parts.append(f"{attr}={json.dumps(value, ensure_ascii=False)}" if value else attr)
        return f"{self.intent}({','.join(parts)})"

    def __str__(self):
        return self.canonical()

    def replace_values(self, mapping: dict[int, str]) -> "MeaningRepresentation":
        slots = tuple((a, mapping.get(i, v)) for i, (a, v) in enumerate(self.slots))
        return MeaningRepresentation(self.intent, slots)


def _split_top_level(body: str, seps: str) -> list[str]:
    out, buf, quote, depth, escaped = [], [], None, 0, False
    for ch in body:
        if quote:
            buf.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\" and quote == '"':
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "'\"" and (not buf or "".join(buf).rstrip().endswith("=")):
            quote = ch
            buf.append(ch)
            continue
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch in seps and depth == 0:
            out.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    out.append("".join(buf))
    return [p.strip() for p in out if p.strip()]


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] == '"':
        try:
            return json.loads(value)
        except json.JSONDecodeError:
            return value[1:-1]
    if len(value) >= 2 and value[0] == value[-1] == "'":
        return value[1:-1]
    return value


_DA_RE = re.compile(r"^\s*([^\s(]+)\s*\((.*)\)\s*$", re.S)
_E2E_SLOT_RE = re.compile(r"\s*([^\[\],]+?)\s*\[(.*?)\]\s*")


def parse_mr(text: str) -> MeaningRepresentation:
    """Parse an MR from dialogue-act or bracketed attribute notation.

    Accepted forms::

        inform(name='hotel drisco';area='pacific heights')
        inform(name="X-name",area="city centre")   # canonical output
        name[The Eagle], eatType[coffee shop]       # intent defaults to inform

    Several dialogue acts joined with ``&`` or ``|`` are merged into one MR
    whose intent is the acts' intents joined by ``+``.
    """
    text = text.strip()
    if not text:
        raise DataError("empty MR")
    if "[" in text and "(" not in text.split("[", 1)[0]:
        slots = [(m.group(1).strip(), m.group(2).strip()) for m in _E2E_SLOT_RE.finditer(text)]
        if not slots:
            raise DataError(f"cannot parse MR: {text!r}")
        return MeaningRepresentation("inform", tuple(slots))
    acts = [a for a in re.split(r"\s*[&|]\s*(?=[^\s(]+\()", text) if a]
    intents, slots = [], []
    for act in acts:
        m = _DA_RE.match(act)
        if not m:
            if re.fullmatch(r"[\w\-]+", act):
                intents.append(act)
                continue
            raise DataError(f"cannot parse MR: {text!r}")
        intents.append(m.group(1))
        for item in _split_top_level(m.group(2), ",;"):
            if "=" in item:
                attr, value = item.split("=", 1)
                slots.append((attr.strip(), _unquote(value)))
            else:
                slots.append((item.strip(), ""))
    return MeaningRepresentation("+".join(intents), tuple(slots))


def linearize_mr(mr: MeaningRepresentation) -> list[str]:
    """Flatten an MR into encoder input tokens.

    The intent comes first, then each slot as ``<slot> attribute value...``
    in corpus order.
    """
    tokens = [mr.intent.lower()]
    for attr, value in mr.slots:
        tokens.append(SLOT)
        tokens.append(normalize_attribute(attr))
        tokens.extend(tokenize(value))
    return tokens


@dataclass(frozen=True)
class TextOutput:
    raw: str
    tokens: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        if self.tokens is None:
            object.__setattr__(self, "tokens", tuple(tokenize(self.raw)))
        else:
            object.__setattr__(self, "tokens", tuple(self.tokens))

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "TextOutput":
        return cls(" ".join(tokens), tuple(tokens))

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class QEInstance:
    """One rating instance (``text_b`` absent) or ranking instance.

    In ranking instances ``text_a`` is the preferred output.
    """

    mr: MeaningRepresentation
    text_a: TextOutput
    text_b: Optional[TextOutput] = None
    rating: Optional[float] = None
    is_ranking: bool = False
    is_synthetic: bool = False
    source_tag: str = ""

    def __post_init__(self):
        if self.is_ranking:
            if self.text_b is None or self.rating is not None:
                raise DataError("ranking instance needs text_b and no rating")
        else:
            if self.text_b is not None or self.rating is None:
                raise DataError("rating instance needs a rating and no text_b")
            if not 1.0 <= float(self.rating) <= 6.0:
                raise DataError(f"rating {self.rating} outside [1, 6]")
            object.__setattr__(self, "rating", float(self.rating))

    @classmethod
    def rated(cls, mr, text, rating, **kw) -> "QEInstance":
        if isinstance(text, str):
            text = TextOutput(text)
        return cls(mr, text, None, rating, False, **kw)

    @classmethod
    def ranked(cls, mr, better, worse, **kw) -> "QEInstance":
        if isinstance(better, str):
            better = TextOutput(better)
        if isinstance(worse, str):
            worse = TextOutput(worse)
        return cls(mr, better, worse, None, True, **kw)


@dataclass(frozen=True)
class Dataset:
    instances: tuple[QEInstance, ...] = ()
    criterion: str = "quality"

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.criterion not in CRITERIA:
            raise DataError(f"unknown criterion {self.criterion!r}")

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def with_instances(self, instances: Iterable[QEInstance]) -> "Dataset":
        return Dataset(tuple(instances), self.criterion)

    def concat(self, other: "Dataset") -> "Dataset":
        if other.criterion != self.criterion:
            raise DataError("cannot mix criteria in one dataset")
        return Dataset(self.instances + other.instances, self.criterion)

    def non_synthetic(self) -> "Dataset":
        return self.with_instances(i for i in self.instances if not i.is_synthetic)

    @property
    def has_ratings(self) -> bool:
        return any(not i.is_ranking for i in self.instances)

    @property
    def has_rankings(self) -> bool:
        return any(i.is_ranking for i in self.instances)


class Vocabulary:
    """Token/index mapping with reserved PAD, UNK and slot-marker entries."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        for tok in tokens:
            if tok in RESERVED:
                continue
            if tok in self.itos:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.itos.append(tok)
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    pad_index = 0
    unk_index = 1
    slot_index = 2

    @classmethod
    def from_token_lists(cls, token_lists: Iterable[Sequence[str]], min_count: int = 1) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        counts = Counter(t for toks in token_lists for t in toks if t not in RESERVED)
        kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.unk_index)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        get = self.stoi.get
        return [get(t, 1) for t in tokens]

    def decode(self, indices: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in indices]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def __repr__(self):
        return f"Vocabulary({len(self)} entries)"


def instance_token_lists(instance: QEInstance):
    yield linearize_mr(instance.mr)
    yield instance.text_a.tokens
    if instance.text_b is not None:
        yield instance.text_b.tokens


def build_vocabulary(datasets: Sequence[Dataset], min_count: int = 1) -> Vocabulary:
    """Collect MR and text tokens occurring at least ``min_count`` times."""
    return Vocabulary.from_token_lists(
        (toks for ds in datasets for inst in ds for toks in instance_token_lists(inst)),
        min_count=min_count,
    )
