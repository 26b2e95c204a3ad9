import numpy as np
import pytest
import scipy.sparse as sp

from cldg.errors import DimensionError, PreconditionError
from cldg.loss import LossConfig
from cldg.model import ModelParams, backward, encode, forward, init_params, project
from cldg.trainer import loss_and_grads

from conftest import gradcheck_setup, max_relative_gradient_error


def unit_params(d, scopes=("local",)):
    tensors = {}
    for s in scopes:
        tensors[f"{s}.W1"] = np.eye(d)
        tensors[f"{s}.W2"] = np.eye(d)
        tensors[f"proj_{s}.W"] = np.eye(d)
        tensors[f"proj_{s}.b"] = np.zeros(d)
    return ModelParams(d, d, d, tuple(scopes), tensors)


def test_identity_propagation():
    X = np.abs(np.random.default_rng(0).standard_normal((5, 3)))
    H, _ = forward(unit_params(3), np.eye(5), X, "local")
    assert np.array_equal(H, X)


def test_scalar_two_leaky_layers():
    H, _ = forward(unit_params(1), np.array([[1.0]]), np.array([[-1.0]]), "local")
    assert H[0, 0] == pytest.approx(-0.04, abs=1e-15)


def test_sparse_and_dense_prop_agree():
    rng = np.random.default_rng(1)
    P = rng.random((6, 6)) * (rng.random((6, 6)) < 0.5)
    X = rng.standard_normal((6, 4))
    params = init_params(4, 8, 3, rng=rng)
    a, _ = forward(params, P, X, "local")
    b, _ = forward(params, sp.csr_matrix(P), X, "local")
    assert np.allclose(a, b, rtol=0, atol=1e-14)


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    P = rng.random((7, 7))
    P = P + P.T
    X = rng.standard_normal((7, 4))
    params = init_params(4, 8, 3, rng=rng)
    perm = rng.permutation(7)
    H, _ = forward(params, P, X, "local")
    Hp, _ = forward(params, P[perm][:, perm], X[perm], "local")
    assert np.allclose(Hp, H[perm], rtol=0, atol=1e-13)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    P, X = rng.random((5, 5)), rng.standard_normal((5, 4))
    params = init_params(4, 8, 3, rng=rng)
    a, _ = forward(params, P, X, "global")
    b, _ = forward(params, P, X, "global")
    assert a.tobytes() == b.tobytes()


def test_forward_shape_errors():
    params = init_params(4, 8, 3, rng=np.random.default_rng(0))
    with pytest.raises(DimensionError):
        forward(params, np.eye(3), np.zeros((4, 4)), "local")
    with pytest.raises(DimensionError):
        forward(params, np.eye(4), np.zeros((4, 5)), "local")
    with pytest.raises(DimensionError):
        forward(init_params(4, 8, 3, scopes=("local",)), np.eye(4), np.zeros((4, 4)), "global")


def test_projection_unit_rows():
    rng = np.random.default_rng(4)
    params = init_params(4, 8, 5, rng=rng)
    z = project(params, rng.standard_normal((50, 8)), "local")
    norms = np.linalg.norm(z, axis=1)
    assert np.all(np.abs(norms[norms > 0] - 1) < 1e-6)


def test_projection_unit_row_unchanged():
    params = unit_params(3)
    row = np.array([[0.6, 0.8, 0.0]])
    assert np.allclose(project(params, row, "local"), row, rtol=0, atol=1e-15)


def test_projection_zero_row():
    params = init_params(4, 8, 5, rng=np.random.default_rng(5))
    z = project(params, np.zeros((2, 8)), "local")
    assert np.all(np.isfinite(z)) and not z.any()


def test_init_shapes_and_independence():
    p = init_params(7, 128, 64, rng=np.random.default_rng(0))
    assert p["local.W1"].shape == (7, 128) and p["local.W2"].shape == (128, 128)
    assert p["proj_global.W"].shape == (128, 64) and p["proj_global.b"].shape == (64,)
    assert not np.array_equal(p["local.W1"], p["global.W1"])
    bound = np.sqrt(6 / (7 + 128))
    assert np.abs(p["local.W1"]).max() <= bound


def test_encoders_share_no_storage():
    params, inputs, cfg = gradcheck_setup(0)
    vi = inputs[0]
    before, _ = encode(params, vi.global_prop, vi.X, "global")
    for name in ("local.W1", "local.W2", "proj_local.W", "proj_local.b"):
        params.tensors[name] += 1.0
    after, _ = encode(params, vi.global_prop, vi.X, "global")
    assert before.tobytes() == after.tobytes()
    names = list(params.tensors)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert not np.shares_memory(params[a], params[b])


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("mode", ["cldg", "cldgpp"])
def test_gradients_match_finite_differences(seed, mode):
    params, inputs, cfg = gradcheck_setup(seed + 10, mode=mode)
    assert max_relative_gradient_error(params, inputs, cfg) < 1e-4


def test_gradient_check_three_views_twenty_nodes():
    params, inputs, cfg = gradcheck_setup(21, num_nodes=20, num_views=3)
    assert max_relative_gradient_error(params, inputs, cfg) < 1e-4


def test_zero_loss_grads_give_zero_param_grads():
    params, inputs, _ = gradcheck_setup(1)
    _, cache = encode(params, inputs[0].local_prop, inputs[0].X, "local", inputs[0].rows)
    grads = backward(params, [cache], [np.zeros((len(inputs[0].rows), params.d_out))])
    assert all(not g.any() for g in grads.values())


def test_duplicated_term_doubles_gradient():
    params, inputs, _ = gradcheck_setup(2)
    vi = inputs[0]
    z, cache = encode(params, vi.local_prop, vi.X, "local", vi.rows)
    dz = np.random.default_rng(0).standard_normal(z.shape)
    once = backward(params, [cache], [dz])
    twice = backward(params, [cache, cache], [dz, dz])
    for name in once:
        assert np.allclose(twice[name], 2 * once[name], rtol=1e-13, atol=0)


def test_missing_cache():
    params = init_params(3, 4, 2)
    with pytest.raises(PreconditionError):
        backward(params, [None], [np.zeros((1, 2))])


def test_term_weights_scale_gradients():
    params, inputs, cfg = gradcheck_setup(3)
    _, base = loss_and_grads(params, inputs, cfg)
    heavier = LossConfig(cfg.tau, cfg.mode, {"ll": 2.0, "gg": 2.0, "lg": 2.0})
    _, double = loss_and_grads(params, inputs, heavier)
    for name in base:
        assert np.allclose(double[name], 2 * base[name], rtol=1e-12, atol=1e-15)
