import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_diagonalizable
from lts0.baseline import (
    BaselineConfig,
    IdentifiedSystem,
    baseline_controller,
    identify_full,
    run_baseline,
)
from lts0.errors import IllConditioned, MarginViolation, SingularGain
from lts0.learner import adapt_params, run_lts0
from lts0.linalg import spectral_radius
from lts0.plant import GenSpec, LinearSystem, Plant, generate_system
from lts0.spectral import decompose


def _usable(n, seed=0, **kw):
    while True:
        s = generate_system(GenSpec(n=n, k=3, seed=seed, **kw))
        try:
            return s, decompose(s.A)
        except MarginViolation:
            seed += 1


def test_identify_diag_exact():
    s = LinearSystem(np.diag([2.0, 0.5]), np.array([[1.0], [0.0]]), k=1)
    idsys = identify_full(Plant(s, x0=[1.0, 1.0]))
    assert idsys.id_steps == 3 and idsys.rank == 3
    np.testing.assert_allclose(idsys.A_hat, s.A, atol=1e-12)
    np.testing.assert_allclose(idsys.B_hat, s.B, atol=1e-12)
    assert idsys.residual < 1e-12


def test_identify_zero_state_rejected():
    s = LinearSystem(np.diag([2.0, 0.5]), np.array([[1.0], [0.0]]), k=1)
    with pytest.raises(IllConditioned):
        identify_full(Plant(s, x0=[0.0, 0.0]))


@given(st.integers(0, 2 ** 31))
@settings(max_examples=20)
def test_identify_random_exact(seed):
    rng = np.random.default_rng(seed)
    A, _, k = random_diagonalizable(rng, 6, k=2, perturb=0.0)
    s = LinearSystem(A, rng.standard_normal((6, 2)), k=2)
    idsys = identify_full(Plant(s, x0=rng.standard_normal(6)), seed=seed)
    assert idsys.rank == 8
    np.testing.assert_allclose(idsys.A_hat, A, atol=1e-7 * max(1.0, np.abs(A).max()))
    np.testing.assert_allclose(idsys.B_hat, s.B, atol=1e-7 * max(1.0, np.abs(s.B).max()))


def _model(A, B):
    return IdentifiedSystem(np.asarray(A, float), np.asarray(B, float), 0, 0.0, A.shape[0] + B.shape[1])


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30)
def test_modal_moves_unstable_poles_to_zero(seed):
    rng = np.random.default_rng(seed)
    A, lam, k = random_diagonalizable(rng, 6, k=2)
    B = rng.standard_normal((6, 2))
    try:
        ctrl = baseline_controller(_model(A, B))
    except (MarginViolation, SingularGain):
        return
    assert ctrl.tau == 1 and ctrl.k == 2
    w = np.sort(np.abs(np.linalg.eigvals(A + B @ ctrl.K)))
    stable = np.sort(np.abs(lam[2:]))
    np.testing.assert_allclose(w[:2], 0.0, atol=1e-6)
    np.testing.assert_allclose(w[2:], stable, atol=1e-6)


def test_modal_symmetric_rho_equals_first_stable_modulus():
    s, sd = _usable(16, eigvec_perturbation=0.0)
    ctrl = baseline_controller(_model(s.A, s.B))
    rho = spectral_radius(s.A + s.B @ ctrl.K)
    assert rho == pytest.approx(sd.moduli[3], abs=1e-8)


def test_tau_hop_method_on_model():
    s, sd = _usable(8)
    ctrl = baseline_controller(_model(s.A, s.B), method="tau-hop", tau_margin=0.05)
    A_pre = np.linalg.matrix_power(s.A, ctrl.tau - 1)
    assert spectral_radius(A_pre @ s.A + A_pre @ s.B @ ctrl.K) < 0.95


def test_controller_stable_model_gives_zero_gain():
    ctrl = baseline_controller(_model(np.diag([0.5, 0.2]), np.eye(2)))
    assert ctrl.k == 0 and not np.any(ctrl.K)


def test_controller_errors():
    with pytest.raises(MarginViolation):
        baseline_controller(_model(np.diag([1.0, 0.5]), np.eye(2)))
    with pytest.raises(SingularGain):
        baseline_controller(_model(np.diag([2.0, 3.0, 0.5]), np.array([[1.0], [1.0], [0.0]])))
    with pytest.raises(SingularGain):
        baseline_controller(_model(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]])))
    with pytest.raises(ValueError):
        baseline_controller(_model(np.diag([2.0, 0.5]), np.eye(2)), method="lqr")


def test_run_baseline_n4_toy():
    A = np.diag([1.5, 0.6, -0.4, 0.2])
    s = LinearSystem(A, np.array([[1.0], [0.3], [0.2], [0.1]]), k=1)
    idsys, ctrl, traj = run_baseline(s, BaselineConfig(control_steps=20), x0=[1.0, 1.0, 1.0, 1.0])
    assert idsys.id_steps == 5
    assert traj.horizon == 25
    assert spectral_radius(A + s.B @ ctrl.K) == pytest.approx(0.6, abs=1e-8)
    norms = traj.norms()
    assert norms[-1] < 1e-3 * norms[5]


def test_run_baseline_deterministic():
    s, _ = _usable(8)
    a = run_baseline(s)[2].states
    b = run_baseline(s)[2].states
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("n", [32, 64])
def test_learner_uses_fewer_steps_than_identification(n):
    s, sd = _usable(n)
    model, _ = run_lts0(Plant(s), adapt_params(s, spec=sd))
    idsys, ctrl, _ = run_baseline(s)
    assert model.steps_used < idsys.id_steps
