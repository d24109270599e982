import numpy as np
import pytest

from conftest import random_pairs, random_text
from nlgqe.data import Dataset, QEInstance
from nlgqe.errors import ConfigError, DataError
from nlgqe.evaluation import ranking_accuracy
from nlgqe.model import load, save
from nlgqe.trainer import TrainConfig, multi_seed_run, train

TINY = dict(width=4, batch_size=8, learning_rate=1e-2, max_epochs=3, synthetic_epochs=0)


def rated_set(seed, n=24, synthetic=0):
    rng = np.random.default_rng(seed)
    insts = [QEInstance.rated(mr, text, float(rng.integers(1, 7))) for mr, text in random_pairs(rng, n)]
    insts += [QEInstance.rated(mr, text, 2.0, is_synthetic=True) for mr, text in random_pairs(rng, synthetic)]
    return Dataset(tuple(insts))


def ranked_set(seed, n=16):
    rng = np.random.default_rng(seed)
    return Dataset(tuple(QEInstance.ranked(mr, text, random_text(rng)) for mr, text in random_pairs(rng, n)))


def test_config_defaults_follow_the_paper():
    c = TrainConfig()
    assert (c.width, c.keep_rate, c.batch_size, c.learning_rate) == (50, 0.8, 50, 1e-4)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(keep_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig(max_epochs=5, synthetic_epochs=6)
    with pytest.raises(ConfigError):
        TrainConfig(selection_metric="bleu")
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"widht": 3})


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("# tiny run\nwidth = 8\nclamp = yes\nlearning_rate = 0.001  # faster\n")
    c = TrainConfig.read(path, seed=4)
    assert (c.width, c.clamp, c.learning_rate, c.seed) == (8, True, 1e-3, 4)
    c.write(tmp_path / "out.cfg")
    assert TrainConfig.read(tmp_path / "out.cfg") == c
    path.write_text("width 8\n")
    with pytest.raises(ConfigError):
        TrainConfig.read(path)
    path.write_text("width = eight\n")
    with pytest.raises(ConfigError):
        TrainConfig.read(path)


def test_training_is_deterministic(tmp_path):
    cfg = TrainConfig(**TINY, seed=3)
    m1, h1 = train(rated_set(0), rated_set(1), cfg)
    m2, h2 = train(rated_set(0), rated_set(1), cfg)
    save(m1, tmp_path / "a")
    save(m2, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert h1.comparable() == h2.comparable()
    m3, _ = train(rated_set(0), rated_set(1), cfg.replace(seed=4))
    assert not np.array_equal(m3.params.out_W.value, m1.params.out_W.value)


def test_synthetic_instances_leave_after_their_epochs():
    cfg = TrainConfig(**{**TINY, "max_epochs": 4, "synthetic_epochs": 2})
    _, history = train(rated_set(0, n=10, synthetic=6), rated_set(1), cfg)
    assert [e.n_train for e in history.epochs] == [16, 16, 10, 10]


def test_selected_epoch_is_best_dev_epoch():
    cfg = TrainConfig(**{**TINY, "max_epochs": 5})
    model, history = train(rated_set(0), rated_set(1), cfg)
    values = [e.selection_value for e in history.epochs]
    assert history.selected_epoch == int(np.argmax(values)) + 1
    assert model.metadata["dev_metric"] == max(values)
    assert model.metadata["epoch"] == history.selected_epoch
    assert history.selection_metric == "pearson"


def test_restored_model_reproduces_selected_dev_value(tmp_path):
    dev = ranked_set(1)
    model, history = train(ranked_set(0), dev, TrainConfig(**TINY))
    assert history.selection_metric == "accuracy"
    _, margins = model.predict_instances(list(dev))
    assert ranking_accuracy(margins) == history.best.selection_value
    save(model, tmp_path / "m")
    assert load(tmp_path / "m").metadata["epoch"] == history.selected_epoch


def test_training_reduces_loss():
    cfg = TrainConfig(width=8, batch_size=8, learning_rate=1e-2, max_epochs=15, synthetic_epochs=0, keep_rate=1.0)
    _, history = train(rated_set(0, n=16), rated_set(1), cfg)
    assert history.epochs[-1].train_loss < 0.5 * history.epochs[0].train_loss


def test_train_errors():
    cfg = TrainConfig(**TINY)
    with pytest.raises(DataError):
        train(Dataset(), rated_set(1), cfg)
    with pytest.raises(DataError):
        train(rated_set(0), rated_set(1, synthetic=2), cfg)
    with pytest.raises(DataError):
        train(rated_set(0), ranked_set(1), cfg.replace(selection_metric="pearson"))


def test_multi_seed_mean_is_average_of_seeds():
    cfg = TrainConfig(**{**TINY, "max_epochs": 2})
    result = multi_seed_run(ranked_set(0), ranked_set(1), ranked_set(2), cfg, seeds=(1, 2, 3))
    accs = [r["accuracy"] for r in result.per_seed]
    assert result.mean["accuracy"] == pytest.approx(np.mean(accs))
    assert result.std["accuracy"] == pytest.approx(np.std(accs))
    with pytest.raises(ConfigError):
        multi_seed_run(ranked_set(0), ranked_set(1), ranked_set(2), cfg, seeds=(1, 1))
