"""Correlation metrics and the two significance tests on made-up predictions."""
import numpy as np

from nlgqe.evaluation import bootstrap_compare, ranking_report, rating_report, williams_from_predictions

rng = np.random.default_rng(3)
human = rng.integers(1, 7, 300).astype(float)
good = human + rng.normal(0, 1.0, 300)
noisy = human + rng.normal(0, 2.5, 300)

print("good system: ", rating_report(good, human).dumps())
print("noisy system:", rating_report(noisy, human).dumps())

# Williams: is the good system's correlation with humans higher, given both systems correlate?
t, p = williams_from_predictions(human, good, noisy)
print(f"Williams t = {t:.2f}, one-sided p = {p:.2g}")

# Ranking margins: positive means the better text scored higher.
margins_a = rng.normal(0.4, 1.0, 400)
margins_b = rng.normal(0.2, 1.0, 400)
print("ranker A:", ranking_report(margins_a).dumps())
print("ranker B:", ranking_report(margins_b).dumps())
print("bootstrap p:", bootstrap_compare(margins_a > 0, margins_b > 0, 1000, np.random.default_rng(0)))
