"""Training a small pairwise ranker on the template world, with and without synthetic pairs.

A single seed at a reduced width keeps this under a couple of minutes.
The acceptance suite runs the five-seed version.
"""
import numpy as np

from nlgqe import TrainConfig, train
from nlgqe.evaluation import bootstrap_compare
from nlgqe.synth import build_corruption_dictionary, generate, sources_from_dataset
from nlgqe.toyworld import ranking_benchmark

bench = ranking_benchmark(n_train_pairs=800, n_dev_pairs=150, n_test_pairs=300, seed=0)
dictionary = build_corruption_dictionary(t for i in bench.train for t in (i.text_a, i.text_b))
synthetic = generate(sources_from_dataset(bench.train)[:150], dictionary, "pairs", seed=0)
print(f"{len(bench.train)} human pairs, {len(synthetic)} synthetic pairs, {len(bench.test)} test pairs")

config = TrainConfig(width=24, learning_rate=1e-3, max_epochs=10, synthetic_epochs=5, seed=1)
outcomes = {}
for name, data, cfg in (("base", bench.train, config.replace(synthetic_epochs=0)),
                        ("synthetic", bench.train.concat(synthetic), config)):
    model, history = train(data, bench.dev, cfg)
    _, margins = model.predict_instances(list(bench.test))
    outcomes[name] = margins > 0
    print(f"{name:9s} dev-selected epoch {history.selected_epoch}, test accuracy {outcomes[name].mean():.3f}")

p = bootstrap_compare(outcomes["synthetic"], outcomes["base"], 1000, np.random.default_rng(0))
print(f"bootstrap p (synthetic not better than base): {p:.3f}")

mr = bench.test.instances[0].mr
texts = [bench.test.instances[0].text_a, bench.test.instances[0].text_b]
print("n-best order for one test MR:", model.rank_n(mr, texts))
