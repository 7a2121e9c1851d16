import numpy as np
import pytest

from app.models.rfs import GAMMA, P1, P2, V1, V2, BernoulliComponent, ObjectState, ParticleSet, PmbState
from app.models.rfs import PoissonIntensity
from app.models.schemas import BirthModel, DynamicsConfig, Region
from app.services.dynamics_service import (
    predict_bernoulli,
    predict_phd,
    predict_pmb,
    propagate_state,
    propagate_states,
    sample_birth_states,
    transition_matrix,
)

NOISELESS = DynamicsConfig(q_pos=0.0, q_int=0.0)


def test_transition_matrix_moves_position_by_velocity():
    x = np.array([1.0, 2.0, 0.5, -0.25, 9.0])
    np.testing.assert_allclose(transition_matrix(2.0) @ x, [2.0, 1.5, 0.5, -0.25, 9.0])


def test_noiseless_trajectory_is_straight(rng):
    x = ObjectState(10.0, 20.0, 0.3, -0.2, 5.0)
    for _ in range(50):
        x = propagate_state(x, NOISELESS, rng)
    assert x.p1 == pytest.approx(25.0)
    assert x.p2 == pytest.approx(10.0)
    assert (x.v1, x.v2, x.gamma) == pytest.approx((0.3, -0.2, 5.0))


def test_process_noise_variances(rng):
    cfg = DynamicsConfig(q_pos=0.04, q_int=0.01)
    out = propagate_states(np.zeros((200_000, 5)), cfg, rng)
    assert np.var(out[:, P1]) == pytest.approx(0.04, rel=0.02)
    assert np.var(out[:, V2]) == pytest.approx(0.04, rel=0.02)
    assert np.var(out[:, GAMMA]) == pytest.approx(0.01, rel=0.02)


def test_predict_bernoulli_thins_existence(rng):
    ps = ParticleSet(np.zeros((4, 5)), np.full(4, 0.25))
    b = BernoulliComponent(r=0.8, spatial=ps, track_id=5)
    out = predict_bernoulli(b, DynamicsConfig(p_s=0.9), rng)
    assert out.r == pytest.approx(0.72)
    assert out.track_id == 5
    np.testing.assert_array_equal(out.spatial.weights, ps.weights)


def test_birth_states_respect_model(rng):
    birth = BirthModel(roi=Region(x_min=2, x_max=5, y_min=10, y_max=11), eta_i=8.0)
    states = sample_birth_states(birth, 5_000, rng)
    assert np.all((states[:, P1] >= 2) & (states[:, P1] <= 5))
    assert np.all((states[:, P2] >= 10) & (states[:, P2] <= 11))
    assert np.all((states[:, GAMMA] >= 0) & (states[:, GAMMA] <= 8))
    assert np.var(states[:, V1]) == pytest.approx(birth.sigma_v2, rel=0.1)


def test_predicted_phd_mass(rng):
    cfg = DynamicsConfig(p_s=0.95)
    birth = BirthModel(mu_b=0.3, n_birth_particles=1_000)
    phd = PoissonIntensity(ParticleSet(rng.uniform(0, 64, size=(300, 5)), np.full(300, 2.0 / 300)))
    out = predict_phd(phd, cfg, birth, rng)
    assert out.mu == pytest.approx(0.95 * 2.0 + 0.3, abs=1e-9)
    assert len(out) == 1_300


def test_predict_pmb_advances_time(rng):
    state = PmbState(k=3, next_track_id=9)
    out = predict_pmb(state, DynamicsConfig(), BirthModel(n_birth_particles=100), rng)
    assert out.k == 4
    assert out.next_track_id == 9
    assert out.phd.mu == pytest.approx(BirthModel().mu_b)
