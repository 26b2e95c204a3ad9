import numpy as np
import pytest

from cldg.errors import DimensionError, PreconditionError
from cldg.evaluation import (
    SplitSpec,
    accuracy,
    encode_views,
    final_embeddings,
    fit_probe,
    linear_probe,
    split_nodes,
    weighted_f1,
)
from cldg.model import ModelParams
from cldg.sampler import all_sequential_views
from cldg.temporal_graph import TemporalGraph


def test_weighted_f1_fixture():
    truth = [0, 0, 0, 1, 1, 2]
    pred = [0, 0, 1, 1, 1, 2]
    assert weighted_f1(pred, truth) == pytest.approx((3 * 0.8 + 2 * 0.8 + 1.0) / 6, abs=1e-15)
    assert weighted_f1(pred, truth) == pytest.approx(0.8333333, abs=1e-7)


def test_weighted_f1_against_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(0)
    for _ in range(20):
        truth = rng.integers(0, 4, 50)
        pred = rng.integers(0, 5, 50)
        assert weighted_f1(pred, truth) == pytest.approx(
            metrics.f1_score(truth, pred, average="weighted", labels=np.unique(truth)), abs=1e-12)


def test_weighted_f1_edge_cases():
    assert weighted_f1([1, 0, 2], [1, 0, 2]) == 1.0
    assert weighted_f1([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(0.5 * (2 * 2 / (2 * 2 + 2)))
    with pytest.raises(DimensionError):
        weighted_f1([0], [0, 1])
    with pytest.raises(PreconditionError):
        weighted_f1([], [])


def test_weighted_f1_equals_accuracy_when_balanced():
    # two symmetric classes with one error each way: precision = recall for both
    truth = [0, 0, 0, 1, 1, 1]
    pred = [0, 0, 1, 1, 1, 0]
    assert weighted_f1(pred, truth) == pytest.approx(accuracy(pred, truth))


@pytest.mark.parametrize("n,classes", [(100, 2), (257, 3), (1000, 5), (43, 4)])
def test_split_partition(n, classes):
    labels = np.random.default_rng(n).integers(0, classes, n)
    labels[:classes] = np.arange(classes)
    labels[-3:] = -1
    train, val, test = split_nodes(labels, SplitSpec(seed=1))
    m = n - 3
    joined = np.concatenate([train, val, test])
    assert len(joined) == len(np.unique(joined)) == m
    assert set(joined) == set(np.flatnonzero(labels >= 0))
    assert abs(len(train) - m / 10) <= 1 and abs(len(val) - m / 10) <= 1
    assert set(labels[train]) == set(range(classes))


def test_split_unstratified_and_infeasible():
    labels = np.arange(50) % 2
    train, val, test = split_nodes(labels, SplitSpec(stratified=False))
    assert (len(train), len(val), len(test)) == (5, 5, 40)
    with pytest.raises(PreconditionError):
        split_nodes(np.arange(20) % 5)  # 2 training nodes for 5 classes


def test_probe_separable():
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1], 100)
    emb = np.zeros((200, 4))
    emb[:, 0] = np.where(labels == 1, 1.0, -1.0)
    emb[:, 1:] = 0.1 * rng.standard_normal((200, 3))
    assert linear_probe(emb, labels) == (1.0, 1.0)


def test_probe_shuffled_labels_near_chance():
    rng = np.random.default_rng(1)
    emb = rng.standard_normal((1000, 16))
    accs = [linear_probe(emb, rng.permutation(np.arange(1000) % 2), SplitSpec(seed=s))[0] for s in range(5)]
    assert abs(np.mean(accs) - 0.5) <= 0.05


def test_probe_missing_class():
    with pytest.raises(PreconditionError):
        fit_probe(np.zeros((2, 2)), np.array([0, 0]), np.zeros((1, 2)), np.array([1]))


def test_probe_predictions_cover_test_split():
    labels = np.repeat([0, 1], 50)
    emb = np.c_[labels, 1 - labels].astype(float)
    (acc, _), (test, pred) = linear_probe(emb, labels, return_predictions=True)
    assert len(test) == 80 and np.array_equal(pred, labels[test]) and acc == 1.0


def identity_model(d):
    t = {"local.W1": np.eye(d), "local.W2": np.eye(d), "proj_local.W": np.eye(d),
         "proj_local.b": np.zeros(d)}
    return ModelParams(d, d, d, ("local",), t)


def test_final_embeddings_single_and_repeated_views():
    # node 2 is active only in the first window; node 3 has the same
    # features and neighbourhood in both windows
    g = TemporalGraph(5, [0, 0, 3, 3], [1, 2, 4, 4], [0.0, 0.2, 0.3, 1.0])
    X = np.random.default_rng(0).standard_normal((5, 3))
    params = identity_model(3)
    emb, flagged = final_embeddings(g, params, X, s=2)
    (n0, z0), (n1, z1) = encode_views(g, params, X, all_sequential_views(g, 2))
    assert not flagged.any()
    assert np.array_equal(emb[2], z0[list(n0).index(2)])
    assert np.allclose(emb[3], z0[list(n0).index(3)], atol=1e-15)
    assert np.allclose(z0[list(n0).index(3)], z1[list(n1).index(3)], atol=1e-15)
    assert np.allclose(np.linalg.norm(emb, axis=1), 1.0)


def test_final_embeddings_flags_cancelling_and_inactive():
    # node 0 only interacts with itself; its feature flips sign in the second
    # window, so its two z rows are x and -x and their mean vanishes
    g = TemporalGraph(3, [0, 0], [0, 0], [0.0, 1.0], features=[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                      override_nodes=[0], override_bounds=[[0.5, 1.0]], override_rows=[[-1.0, 0.0]])
    emb, flagged = final_embeddings(g, identity_model(2), g.features, s=2)
    (_, z0), (_, z1) = encode_views(g, identity_model(2), g.features, all_sequential_views(g, 2))
    assert np.allclose(z0, [[1.0, 0.0]]) and np.allclose(z1, [[-1.0, 0.0]])
    assert flagged.tolist() == [True, True, True]
    assert not emb.any()


def test_accuracy_length_mismatch():
    with pytest.raises(DimensionError):
        accuracy([0, 1], [0])
