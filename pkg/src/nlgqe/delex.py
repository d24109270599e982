"""Partial delexicalisation of MR slot values and their mentions in texts."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .data import Dataset, MeaningRepresentation, QEInstance, TextOutput, normalize_attribute
from .errors import DataError


class DelexLevel(str, enum.Enum):
    FULL = "full"
    NAMES_ONLY = "names_only"
    NONE = "none"


@dataclass(frozen=True)
class DelexRule:
    """How one attribute is delexicalised.

    ``aliases`` lists corpus attribute names the rule also applies to
    (e.g. ``name`` for "venue name"). ``exceptions`` holds values that are
    never replaced; it must be given (possibly empty) for ``names_only``.
    """

    attribute: str
    level: DelexLevel
    exceptions: Optional[frozenset] = None
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "level", DelexLevel(self.level))
        if self.exceptions is not None:
            object.__setattr__(self, "exceptions", frozenset(e.lower() for e in self.exceptions))
        if self.level is DelexLevel.NAMES_ONLY and self.exceptions is None:
            raise ValueError("names_only rule needs an explicit exception set")

    def keys(self) -> set[str]:
        return {normalize_attribute(self.attribute)} | {normalize_attribute(a) for a in self.aliases}

    def fires(self, value: str) -> bool:
        if not value or self.level is DelexLevel.NONE:
            return False
        if self.exceptions and value.strip().lower() in self.exceptions:
            return False
        return True


@dataclass(frozen=True)
class Substitution:
    attribute: str
    value: str
    placeholder: str
    span: Optional[tuple[int, int]] = None  # in the original text
    surface: Optional[str] = None  # matched text, original casing


def default_rules() -> tuple[DelexRule, ...]:
    """The attribute table used for the restaurant/hotel corpora."""
    full, none = DelexLevel.FULL, DelexLevel.NONE
    return (
        DelexRule("address", full),
        DelexRule("area", DelexLevel.NAMES_ONLY, frozenset({"city centre", "riverside"})),
        DelexRule("customer rating", none, aliases=("customerrating", "rating")),
        DelexRule("food/cuisine", none, aliases=("food", "cuisine")),
        DelexRule("kids-friendly", none, aliases=("kidsallowed", "kids_allowed", "familyfriendly", "family_friendly")),
        DelexRule("meal type", none, aliases=("goodformeal", "good_for_meal")),
        DelexRule("nearby venue/monument name", full, aliases=("near",)),
        DelexRule("phone number", full, aliases=("phone",)),
        DelexRule("postcode", full),
        DelexRule("price", full),
        DelexRule("price range", none, aliases=("pricerange",)),
        DelexRule("venue count", full, aliases=("count",)),
        DelexRule("venue name", full, aliases=("name",)),
        DelexRule("venue type", none, aliases=("type", "eattype", "eat_type")),
    )


def rule_index(rules: Sequence[DelexRule]) -> dict[str, DelexRule]:
    index = {}
    for rule in rules:
        for key in rule.keys():
            index[key] = rule
    return index


def placeholder_for(attribute: str) -> str:
    return "X-" + normalize_attribute(attribute)


def is_placeholder(token: str) -> bool:
    return token.lower().startswith("x-") and len(token) > 2


def _find_spans(text: str, value: str) -> list[tuple[int, int]]:
    pattern = re.compile(r"(?<!\w)" + re.escape(value) + r"(?!\w)", re.IGNORECASE)
    return [m.span() for m in pattern.finditer(text)]


def delexicalize(mr: MeaningRepresentation, text, rules: Sequence[DelexRule] = None):
    """Replace firing slot values in ``mr`` and their mentions in ``text``.

    ``text`` may be a :class:`TextOutput`, a string, or ``None`` (MR only).
    Returns ``(mr', text', substitutions)``. Longer values are matched first
    and claimed spans are never matched again.
    """
    index = rule_index(default_rules() if rules is None else rules)
    raw = text.raw if isinstance(text, TextOutput) else text

    firing = []
    for i, (attr, value) in enumerate(mr.slots):
        rule = index.get(normalize_attribute(attr))
        ph = placeholder_for(attr)
        if rule is None or not rule.fires(value) or value == ph:
            continue
        firing.append((i, attr, value, ph))

    new_mr = mr.replace_values({i: ph for i, _, _, ph in firing})
    if raw is None:
        subs = [Substitution(attr, value, ph) for _, attr, value, ph in firing]
        return new_mr, None, subs

    claimed: list[tuple[int, int]] = []
    subs = []
    for i, attr, value, ph in sorted(firing, key=lambda f: (-len(f[2]), f[0])):
        found = False
        for start, end in _find_spans(raw, value):
            if any(start < e and s < end for s, e in claimed):
                continue
            claimed.append((start, end))
            subs.append(Substitution(attr, value, ph, (start, end), raw[start:end]))
            found = True
        if not found:
            subs.append(Substitution(attr, value, ph))

    out, pos = [], 0
    for sub in sorted((s for s in subs if s.span), key=lambda s: s.span[0]):
        out.append(raw[pos:sub.span[0]])
        out.append(sub.placeholder)
        pos = sub.span[1]
    out.append(raw[pos:])
    new_raw = "".join(out)
    new_text = TextOutput(new_raw) if isinstance(text, TextOutput) else new_raw
    return new_mr, new_text, subs


def relexicalize(text, substitutions: Sequence[Substitution]):
    """Undo :func:`delexicalize` on its output text, restoring original casing."""
    raw = text.raw if isinstance(text, TextOutput) else text
    out, pos, shift = [], 0, 0
    for sub in sorted((s for s in substitutions if s.span), key=lambda s: s.span[0]):
        start = sub.span[0] + shift
        out.append(raw[pos:start])
        out.append(sub.surface)
        pos = start + len(sub.placeholder)
        shift += len(sub.placeholder) - (sub.span[1] - sub.span[0])
    out.append(raw[pos:])
    restored = "".join(out)
    return TextOutput(restored) if isinstance(text, TextOutput) else restored


def delexicalize_instance(inst: QEInstance, rules: Sequence[DelexRule] = None) -> QEInstance:
    mr, text_a, _ = delexicalize(inst.mr, inst.text_a, rules)
    text_b = None
    if inst.text_b is not None:
        _, text_b, _ = delexicalize(inst.mr, inst.text_b, rules)
    return replace(inst, mr=mr, text_a=text_a, text_b=text_b)


def delexicalize_dataset(dataset: Dataset, rules: Sequence[DelexRule] = None) -> Dataset:
    return dataset.with_instances(delexicalize_instance(i, rules) for i in dataset)


def read_rules(path) -> tuple[DelexRule, ...]:
    """Read ``attribute<TAB>level<TAB>exceptions[<TAB>aliases]`` lines.

    Levels are ``full``, ``names_only`` or ``none`` (``-`` also means none).
    An exception or alias field of ``-`` or empty means an empty set.
    """
    rules = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2 or len(fields) > 4:
            raise DataError("expected 2-4 tab-separated fields", line=lineno)
        attr, level = fields[0].strip(), fields[1].strip()
        level = "none" if level == "-" else level
        try:
            level = DelexLevel(level)
        except ValueError:
            raise DataError(f"unknown delexicalisation level {level!r}", line=lineno) from None
        exc = _set_field(fields[2]) if len(fields) > 2 else None
        if exc is None and level is DelexLevel.NAMES_ONLY:
            exc = frozenset()
        aliases = tuple(_set_field(fields[3]) or ()) if len(fields) > 3 else ()
        rules.append(DelexRule(attr, level, exc, tuple(sorted(aliases))))
    return tuple(rules)


def _set_field(field: str):
    field = field.strip()
    if field in ("", "-"):
        return frozenset()
    return frozenset(x.strip() for x in field.split(",") if x.strip())


def write_rules(rules: Sequence[DelexRule], path) -> None:
    lines = []
    for r in rules:
        exc = ",".join(sorted(r.exceptions)) if r.exceptions else "-"
        aliases = ",".join(r.aliases) if r.aliases else "-"
        lines.append(f"{r.attribute}\t{r.level.value}\t{exc}\t{aliases}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def rules_to_json(rules: Sequence[DelexRule]) -> list:
    return [
        {
            "attribute": r.attribute,
            "level": r.level.value,
            "exceptions": None if r.exceptions is None else sorted(r.exceptions),
            "aliases": list(r.aliases),
        }
        for r in rules
    ]


def rules_from_json(items) -> tuple[DelexRule, ...]:
    return tuple(
        DelexRule(
            d["attribute"],
            d["level"],
            None if d["exceptions"] is None else frozenset(d["exceptions"]),
            tuple(d["aliases"]),
        )
        for d in items
    )
