"""
Dynamics service.

Single-object transition model (nearly constant velocity + intensity random
walk) and the Poisson/multi-Bernoulli prediction step: Bernoulli survival
thinning and the PHD survival + birth superposition.

Objects leaving the ROI are not removed here; the likelihood takes care of
them.
"""

import logging

import numpy as np

from app.models.rfs import GAMMA, P1, P2, STATE_DIM, V1, V2, BernoulliComponent, ObjectState
from app.models.rfs import ParticleSet, PmbState, PoissonIntensity
from app.models.schemas import BirthModel, DynamicsConfig

logger = logging.getLogger("tbdtrack.dynamics")


def transition_matrix(dt: float) -> np.ndarray:
    """Constant-velocity map on [p1, p2, v1, v2, γ] (γ unchanged)."""
    f = np.eye(STATE_DIM)
    f[P1, V1] = dt
    f[P2, V2] = dt
    return f


def propagate_states(states: np.ndarray, cfg: DynamicsConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Propagate an (N, 5) state matrix one step.

    Kinematics get N(0, q_pos·I₄) driving noise, intensity N(0, q_int).
    """
    n = states.shape[0]
    out = states @ transition_matrix(cfg.dt).T
    if n == 0:
        return out
    if cfg.q_pos > 0:
        out[:, P1:GAMMA] += rng.normal(0.0, np.sqrt(cfg.q_pos), size=(n, 4))
    if cfg.q_int > 0:
        out[:, GAMMA] += rng.normal(0.0, np.sqrt(cfg.q_int), size=n)
    return out


def propagate_state(x: ObjectState, cfg: DynamicsConfig, rng: np.random.Generator) -> ObjectState:
    """One draw from f(x_k | x_{k-1})."""
    return ObjectState.from_array(propagate_states(x.to_array()[None, :], cfg, rng)[0])


def predict_bernoulli(
    b: BernoulliComponent,
    cfg: DynamicsConfig,
    rng: np.random.Generator,
) -> BernoulliComponent:
    """r' = p_S·r; particles propagated, weights untouched."""
    spatial = b.spatial
    if len(spatial) > 0:
        spatial = ParticleSet(propagate_states(spatial.states, cfg, rng), spatial.weights)
    return BernoulliComponent(r=cfg.p_s * b.r, spatial=spatial, track_id=b.track_id)


def sample_birth_states(birth: BirthModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    n draws from f_B: position uniform over the birth ROI, velocity
    N(0, σ_v²·I₂), intensity uniform on [0, η_I].
    """
    states = np.empty((n, STATE_DIM))
    states[:, P1] = rng.uniform(birth.roi.x_min, birth.roi.x_max, size=n)
    states[:, P2] = rng.uniform(birth.roi.y_min, birth.roi.y_max, size=n)
    states[:, V1:GAMMA] = rng.normal(0.0, np.sqrt(birth.sigma_v2), size=(n, 2))
    states[:, GAMMA] = rng.uniform(0.0, birth.eta_i, size=n)
    return states


def predict_phd(
    phd: PoissonIntensity,
    cfg: DynamicsConfig,
    birth: BirthModel,
    rng: np.random.Generator,
) -> PoissonIntensity:
    """
    λ_{k|k-1} = p_S·(propagated λ) + λ_B.

    Birth particles are drawn fresh every step with weight μ_B / n each, so
    the predicted mass is p_S·μ + μ_B.
    """
    survivors = phd.particles
    if len(survivors) > 0:
        survivors = ParticleSet(
            propagate_states(survivors.states, cfg, rng),
            survivors.weights * cfg.p_s,
        )
    n_birth = birth.n_birth_particles
    born = ParticleSet(sample_birth_states(birth, n_birth, rng), np.full(n_birth, birth.mu_b / n_birth))
    return PoissonIntensity(ParticleSet.concatenate([survivors, born]))


def predict_pmb(
    state: PmbState,
    cfg: DynamicsConfig,
    birth: BirthModel,
    rng: np.random.Generator,
) -> PmbState:
    """Predicted PMB density for time k + 1."""
    bernoullis = tuple(predict_bernoulli(b, cfg, rng) for b in state.bernoullis)
    phd = predict_phd(state.phd, cfg, birth, rng)
    logger.debug(
        "[PREDICT] k=%d J=%d mu=%.6g particles=%d",
        state.k + 1, len(bernoullis), phd.mu, len(phd),
    )
    return PmbState(
        k=state.k + 1,
        bernoullis=bernoullis,
        phd=phd,
        next_track_id=state.next_track_id,
    )
