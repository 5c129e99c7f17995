import numpy as np
import pytest

from mvaslam.association import AssociationInput, AssociationOutput, run_association
from mvaslam.errors import NonFinite

from oracles import enumerate_association


def beliefs(inp: AssociationInput, out: AssociationOutput):
    """Normalized association beliefs: evidence times marginal message."""
    bel_path = inp.beta * out.eta
    bel_path /= bel_path.sum(axis=1, keepdims=True)
    bel_meas = inp.xi * out.sigma_out
    bel_meas /= bel_meas.sum(axis=1, keepdims=True)
    return bel_path, bel_meas


def random_instance(rng, n_paths, n_meas):
    beta = rng.random((n_paths, n_meas + 1))
    beta[:, 0] = 0.1 + 0.9 * rng.random(n_paths)
    xi = rng.random((n_meas, n_paths + 1))
    xi[:, 0] = 0.1 + 0.9 * rng.random(n_meas)
    return AssociationInput(beta=beta, xi=xi)


def test_no_measurements_gives_unit_messages():
    inp = AssociationInput(beta=np.array([[0.3], [0.8], [1.0]]),
                           xi=np.zeros((0, 4)))
    out = run_association(inp)
    assert out.eta.shape == (3, 1)
    assert np.allclose(out.eta, 1.0)
    assert out.sigma_out.shape == (0, 4)


def test_no_paths():
    inp = AssociationInput(beta=np.zeros((0, 3)), xi=np.ones((2, 1)))
    out = run_association(inp)
    assert out.sigma_out.shape == (2, 1)
    assert np.allclose(out.sigma_out, 1.0)


def test_tree_single_path_single_measurement_exact():
    rng = np.random.default_rng(0)
    for _ in range(50):
        inp = AssociationInput(beta=rng.random((1, 2)) + 0.1,
                               xi=rng.random((1, 2)) + 0.1)
        out = run_association(inp)
        bel_path, bel_meas = beliefs(inp, out)
        ref_path, ref_meas = enumerate_association(inp.beta, inp.xi)
        assert np.allclose(bel_path, ref_path, atol=1e-9)
        assert np.allclose(bel_meas, ref_meas, atol=1e-9)


def test_tree_many_paths_one_measurement_exact():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n_paths = int(rng.integers(2, 6))
        inp = AssociationInput(beta=rng.random((n_paths, 2)) + 0.05,
                               xi=rng.random((1, n_paths + 1)) + 0.05)
        out = run_association(inp)
        bel_path, bel_meas = beliefs(inp, out)
        ref_path, ref_meas = enumerate_association(inp.beta, inp.xi)
        assert np.allclose(bel_path, ref_path, atol=1e-9)
        assert np.allclose(bel_meas, ref_meas, atol=1e-9)


def test_tree_one_path_many_measurements_exact():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n_meas = int(rng.integers(2, 5))
        inp = AssociationInput(beta=rng.random((1, n_meas + 1)) + 0.05,
                               xi=rng.random((n_meas, 2)) + 0.05)
        out = run_association(inp)
        bel_path, bel_meas = beliefs(inp, out)
        ref_path, ref_meas = enumerate_association(inp.beta, inp.xi)
        assert np.allclose(bel_path, ref_path, atol=1e-9)
        assert np.allclose(bel_meas, ref_meas, atol=1e-9)


def test_exchangeable_instances_are_symmetric():
    row = np.array([0.4, 1.3, 1.3])
    col = np.array([0.7, 0.9, 0.9])
    inp = AssociationInput(beta=np.stack([row, row]), xi=np.stack([col, col]))
    out = run_association(inp)
    assert np.allclose(out.eta[0], out.eta[1], atol=1e-12)
    assert np.allclose(out.sigma_out[0], out.sigma_out[1], atol=1e-12)
    assert out.eta[0, 1] == pytest.approx(out.eta[0, 2], abs=1e-12)
    assert out.sigma_out[0, 1] == pytest.approx(out.sigma_out[0, 2], abs=1e-12)


def test_random_instances_close_to_enumeration():
    rng = np.random.default_rng(2024)
    worst_tv = 0.0
    converged = 0
    n_instances = 1000
    for _ in range(n_instances):
        n_paths = int(rng.integers(1, 5))
        n_meas = int(rng.integers(1, 4))
        inp = random_instance(rng, n_paths, n_meas)
        out = run_association(inp, max_iters=20, tol=1e-6)
        if out.iterations_used < 20:
            converged += 1
        bel_path, bel_meas = beliefs(inp, out)
        ref_path, ref_meas = enumerate_association(inp.beta, inp.xi)
        tv_path = 0.5 * np.max(np.abs(bel_path - ref_path).sum(axis=1))
        tv_meas = 0.5 * np.max(np.abs(bel_meas - ref_meas).sum(axis=1)) if n_meas else 0.0
        worst_tv = max(worst_tv, tv_path, tv_meas)
    assert worst_tv <= 0.1, f"worst TV {worst_tv}"
    assert converged >= 0.99 * n_instances


def test_scale_invariance_of_decisions():
    rng = np.random.default_rng(9)
    for _ in range(100):
        inp = random_instance(rng, 3, 3)
        out = run_association(inp)
        scaled = AssociationInput(beta=inp.beta.copy(), xi=inp.xi)
        scaled.beta[1] *= 37.5
        out2 = run_association(scaled)
        row = inp.beta[1] * out.eta[1]
        row2 = scaled.beta[1] * out2.eta[1]
        assert np.argmax(row) == np.argmax(row2)


def test_input_validation():
    with pytest.raises(ValueError):
        AssociationInput(beta=np.ones((2, 3)), xi=np.ones((2, 2)))
    with pytest.raises(ValueError):
        AssociationInput(beta=-np.ones((1, 2)), xi=np.ones((1, 2)))
    with pytest.raises(NonFinite):
        AssociationInput(beta=np.array([[np.inf, 1.0]]), xi=np.ones((1, 2)))
    bad = np.ones((2, 3))
    bad[0, 0] = 0.0
    with pytest.raises(ValueError):
        AssociationInput(beta=bad, xi=np.ones((2, 3)))


def test_outputs_are_normalized():
    rng = np.random.default_rng(77)
    inp = random_instance(rng, 4, 3)
    out = run_association(inp)
    assert np.allclose(out.eta.sum(axis=1), 1.0)
    assert np.allclose(out.sigma_out.sum(axis=1), 1.0)
    assert out.iterations_used >= 1
