"""Corrupting a sentence with a controlled number of word-level errors.

Shows the graded rating targets and the nine ranking pairs built from one source text.
"""
import numpy as np

from nlgqe.synth import (
    SyntheticSource, build_corruption_dictionary, corrupt, lowered_score, synth_pairs, word_edit_distance,
)
from nlgqe.toyworld import rating_set

corpus = rating_set(100, seed=1)
dictionary = build_corruption_dictionary(i.text_a for i in corpus)
source = corpus.instances[0]
print("source:", " ".join(source.text_a.tokens))

rng = np.random.default_rng(0)
for k in range(5):
    out = corrupt(source.text_a, k, dictionary, rng)
    dist = word_edit_distance(source.text_a.tokens, out.tokens)
    print(f"{k} errors (distance {dist}, target {lowered_score(6.0, k):.0f}):", " ".join(out.tokens))

print()
for pair in synth_pairs(SyntheticSource(source.mr, source.text_a), dictionary, rng):
    print(pair.source_tag.split(":")[2], "|", " ".join(pair.text_a.tokens), "  >  ", " ".join(pair.text_b.tokens))
