"""A template-generated restaurant domain with simulated NLG systems and human rankings.

Every MR is realised by a template and then damaged by a latent number of
defects: surface noise (dropped, doubled, swapped-in or stray words) and
content errors (a missing slot or a wrong value). Simulated annotators rank
five outputs per MR by their noisy perception of the defect count, so the
pairwise data behaves like a small relative-ranking corpus.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ranked_pairs
from .data import Dataset, MeaningRepresentation, QEInstance, TextOutput
from .delex import delexicalize, delexicalize_dataset
from .synth import EDIT_OPS, CorruptionDictionary, apply_edit

NAMES = [
    "The Eagle", "Blue Spice", "The Mill", "Aromi", "Fitzbillies", "Zizzi", "The Punter", "Loch Fyne",
    "Cotto", "The Phoenix", "Alimentum", "Giraffe", "The Wrestlers", "Strada", "Clowns", "Bibimbap House",
]
NEAR = ["Burger King", "Café Sicilia", "The Bakers", "Raja Indian Cuisine", "All Bar One", "Rainbow Vegetarian Café"]
VALUES = {
    "eat_type": ["restaurant", "pub", "coffee shop"],
    "food": ["chinese", "italian", "french", "indian", "english", "japanese", "fast food"],
    "price_range": ["cheap", "moderate", "expensive"],
    "area": ["city centre", "riverside"],
    "family_friendly": ["yes", "no"],
    "customer_rating": ["low", "average", "high"],
    "near": NEAR,
}
OPTIONAL = ["food", "price_range", "area", "family_friendly", "customer_rating", "near"]


def _phrase(attr, value, rng):
    variants = {
        "food": [f"serving {value} food", f"that serves {value} food", f"with {value} food"],
        "price_range": [f"with {value} prices", f"in the {value} price range"],
        "area": [f"in the {value}", f"located in the {value} area"],
        "family_friendly": (["which is family friendly", "that welcomes kids"] if value == "yes"
                            else ["which is not family friendly", "that does not allow kids"]),
        "customer_rating": [f"with a {value} customer rating", f"rated {value} by customers"],
        "near": [f"near {value}", f"close to {value}"],
    }[attr]
    return variants[int(rng.integers(len(variants)))]


def realise(mr: MeaningRepresentation, rng, skip=()) -> list[str]:
    """Template realisation as a list of phrases (first phrase names the venue)."""
    slots = dict(mr.slots)
    eat = slots.get("eat_type", "restaurant")
    opening = [f"{slots['name']} is a {eat}", f"there is a {eat} called {slots['name']}"]
    phrases = [opening[int(rng.integers(2))]]
    for attr, value in mr.slots:
        if attr in ("name", "eat_type") or attr in skip:
            continue
        phrases.append(_phrase(attr, value, rng))
    return phrases


def random_mr(rng) -> MeaningRepresentation:
    n_opt = int(rng.integers(1, 4))
    chosen = sorted(rng.choice(len(OPTIONAL), size=n_opt, replace=False))
    slots = [("name", NAMES[int(rng.integers(len(NAMES)))]), ("eat_type", VALUES["eat_type"][int(rng.integers(3))])]
    for k in chosen:
        attr = OPTIONAL[k]
        vals = VALUES[attr]
        slots.append((attr, vals[int(rng.integers(len(vals)))]))
    return MeaningRepresentation("inform", tuple(slots))


@dataclass(frozen=True)
class WorldConfig:
    outputs_per_mr: int = 5
    max_defects: int = 4
    surface_share: float = 0.7  # fraction of defects that are surface noise
    annotator_noise: float = 0.6


def system_output(mr, n_defects, rng, dictionary, surface_share) -> str:
    """Realise ``mr`` and inject ``n_defects`` defects."""
    content = sum(rng.random() >= surface_share for _ in range(n_defects))
    surface = n_defects - content
    optional = [a for a, _ in mr.slots if a not in ("name", "eat_type")]
    skip, wrong = set(), {}
    for _ in range(content):
        if optional and rng.random() < 0.5:
            skip.add(optional[int(rng.integers(len(optional)))])
        elif optional:
            attr = optional[int(rng.integers(len(optional)))]
            alts = [v for v in VALUES[attr] if v != dict(mr.slots)[attr]]
            wrong[attr] = alts[int(rng.integers(len(alts)))]
        else:
            surface += 1
    shown = MeaningRepresentation(mr.intent, tuple((a, wrong.get(a, v)) for a, v in mr.slots))
    tokens = " , ".join(realise(shown, rng, skip)).split() + ["."]
    for _ in range(surface):
        op = EDIT_OPS[int(rng.integers(len(EDIT_OPS)))]
        tokens = apply_edit(tokens, op, dictionary, rng)
    return " ".join(tokens)


def _dictionary() -> CorruptionDictionary:
    words = set("is a the there called with serving that serves food prices price range in located area "
                "which not family friendly welcomes kids does allow rated by customers customer rating near close to".split())
    for vals in VALUES.values():
        for v in vals:
            words.update(v.lower().split())
    return CorruptionDictionary(tuple(sorted(words)))


def ranked_records(n_mrs: int, seed: int, config: WorldConfig = WorldConfig()):
    """``n_mrs`` records of (MR, [(system, text, rank), ...])."""
    rng = np.random.default_rng(seed)
    dictionary = _dictionary()
    records = []
    for _ in range(n_mrs):
        mr = random_mr(rng)
        outputs = []
        defects = rng.integers(0, config.max_defects + 1, size=config.outputs_per_mr)
        perceived = np.round(defects + rng.normal(0, config.annotator_noise, size=defects.size))
        ranks = 1 + np.searchsorted(np.unique(perceived), perceived)
        for k, d in enumerate(defects):
            text = system_output(mr, int(d), rng, dictionary, config.surface_share)
            outputs.append((f"sys{k}:{int(d)}", text, int(ranks[k])))
        records.append((mr, outputs))
    return records


def pairs_from_records(records, tag="toy") -> list[QEInstance]:
    out = []
    for mr, outputs in records:
        for better, worse in ranked_pairs(outputs):
            out.append(QEInstance.ranked(mr, TextOutput(better[1]), TextOutput(worse[1]),
                                         source_tag=f"{tag}:{better[0]}>{worse[0]}"))
    return out


@dataclass
class Benchmark:
    train: Dataset
    dev: Dataset
    test: Dataset
    references: list  # (MR, clean template text) for training MRs


def ranking_benchmark(n_train_pairs: int = 2000, n_dev_pairs: int = 250, n_test_pairs: int = 500,
                      seed: int = 0, config: WorldConfig = WorldConfig(), delex: bool = True) -> Benchmark:
    """Build MR-disjoint, delexicalised train/dev/test ranking sets of roughly the requested sizes.

    Train and dev are filled MR by MR until the pair count is reached; the
    test section is cut to exactly ``n_test_pairs``.
    """
    rng = np.random.default_rng(seed)
    sections = []
    seen = set()
    for target, exact in ((n_train_pairs, False), (n_dev_pairs, False), (n_test_pairs, True)):
        insts = []
        while len(insts) < target:
            (mr, outputs), = ranked_records(1, int(rng.integers(2**32)), config)
            key = (delexicalize(mr, None)[0] if delex else mr).canonical()
            if key in seen:
                continue
            seen.add(key)
            insts.extend(pairs_from_records([(mr, outputs)]))
        sections.append(Dataset(tuple(insts[:target] if exact else insts)))
    refs = []
    ref_rng = np.random.default_rng([seed, 1])
    mrs = {i.mr.canonical(): i.mr for i in sections[0]}
    for mr in mrs.values():
        refs.append((mr, " , ".join(realise(mr, ref_rng)) + " ."))
    if delex:
        sections = [delexicalize_dataset(s) for s in sections]
        refs = [delexicalize(mr, TextOutput(t))[:2] for mr, t in refs]
    return Benchmark(*sections, references=refs)


def rating_set(n_instances: int, seed: int = 0, config: WorldConfig = WorldConfig(), delex: bool = True) -> Dataset:
    """``n_instances`` rated outputs; the rating falls by 1.25 points per defect."""
    rng = np.random.default_rng(seed)
    dictionary = _dictionary()
    insts = []
    for _ in range(n_instances):
        mr = random_mr(rng)
        d = int(rng.integers(0, config.max_defects + 1))
        text = system_output(mr, d, rng, dictionary, config.surface_share)
        insts.append(QEInstance.rated(mr, TextOutput(text), 6.0 - 1.25 * d, source_tag=f"toy:{d}"))
    dataset = Dataset(tuple(insts))
    return delexicalize_dataset(dataset) if delex else dataset
