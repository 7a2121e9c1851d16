import numpy as np
import pytest

from app.models.rfs import BernoulliComponent, ParticleSet, PmbState, PoissonIntensity
from app.models.schemas import GridGeometry, NoiseModel, UpdateConfig
from app.services.association_service import (
    AssociationWeights,
    CellSupport,
    LegacyAssociation,
    LegacyMarginal,
    MarginalPmfs,
    NewAssociation,
    build_weights,
    spa_marginals,
)
from app.services.measurement_service import IntensityImage
from app.services.update_service import (
    approximate_and_recycle,
    cap_phd,
    extract_estimates,
    mb_approximation,
    recycle,
)

CFG = UpdateConfig(eta_r=0.1, n_bernoulli_particles=50, n_phd_particles_cap=100)


def _component(r, track_id=0, n=10, at=(1.0, 1.0)):
    states = np.zeros((n, 5))
    states[:, 0], states[:, 1] = at
    return BernoulliComponent(r=r, spatial=ParticleSet(states, np.full(n, 1.0 / n)), track_id=track_id)


def _support(cells_per_particle):
    cells = np.asarray(cells_per_particle, dtype=np.int64)
    n = cells.shape[0]
    states = np.zeros((n, 5))
    states[:, 0] = np.arange(n)
    share = np.zeros(n)
    for m in np.unique(cells):
        share[cells == m] = 1.0 / np.sum(cells == m)
    return CellSupport(particles=ParticleSet(states, np.full(n, 1.0 / n)), cells=cells, share=share)


def _weights_with_legacy(beta0, cells):
    support = _support([c for c in cells for _ in range(3)])
    leg = LegacyAssociation(beta0=beta0, cells=np.array(cells), log_beta=np.zeros(len(cells)), support=support)
    new = NewAssociation(cells=np.array(cells), log_beta=np.zeros(len(cells)), r=np.zeros(len(cells)))
    return AssociationWeights(legacy=(leg,), new=new)


# ============================================
# mb_approximation
# ============================================

def test_legacy_with_certain_miss_is_dropped(rng):
    w = _weights_with_legacy(1.0, [4])
    m = MarginalPmfs(
        legacy=(LegacyMarginal(p0=1.0, cells=np.array([4]), probs=np.array([0.0])),),
        new_cells=np.array([4]),
        p1=np.array([1.0]),
    )
    assert mb_approximation(w, m, CFG, rng).bernoullis == ()


def test_legacy_existence_is_detection_mass(rng):
    w = _weights_with_legacy(0.5, [1, 2])
    m = MarginalPmfs(
        legacy=(LegacyMarginal(p0=0.25, cells=np.array([1, 2]), probs=np.array([0.5, 0.25])),),
        new_cells=np.array([1, 2]),
        p1=np.array([0.5, 0.75]),
    )
    result = mb_approximation(w, m, CFG, rng, track_ids=[7])
    (b,) = result.bernoullis
    assert b.r == pytest.approx(0.75)
    assert b.track_id == 7
    assert len(b.spatial) == CFG.n_bernoulli_particles
    assert b.spatial.is_normalized


def test_weak_components_still_get_the_particle_budget(rng):
    w = _weights_with_legacy(0.5, [1, 2])
    m = MarginalPmfs(
        legacy=(LegacyMarginal(p0=0.95, cells=np.array([1, 2]), probs=np.array([0.05, 0.0])),),
        new_cells=np.array([1, 2]),
        p1=np.array([0.95, 1.0]),
    )
    (b,) = mb_approximation(w, m, CFG, rng).bernoullis
    assert b.r == pytest.approx(0.05)
    assert b.r < CFG.eta_r
    assert len(b.spatial) == CFG.n_bernoulli_particles
    assert b.spatial.is_normalized


def test_every_component_has_the_particle_budget(rng):
    geom = GridGeometry(width=4, height=4)
    image = IntensityImage(np.ones(16), geom, 1)
    states = np.zeros((4, 5))
    states[:, 0] = [0.5, 1.5, 2.5, 3.5]
    states[:, 1] = 0.5
    states[:, 4] = 3.0
    phd = PoissonIntensity(ParticleSet(states, np.array([0.5, 0.05, 0.01, 0.001])))
    w = build_weights(PmbState(k=1, phd=phd), image, NoiseModel(), geom)
    result = mb_approximation(w, spa_marginals(w), CFG, rng)
    assert len(result.bernoullis) == 4
    assert any(b.r < CFG.eta_r for b in result.bernoullis)
    assert all(len(b.spatial) == CFG.n_bernoulli_particles for b in result.bernoullis)


def test_new_component_from_worked_example(rng):
    geom = GridGeometry(width=4, height=4)
    image = IntensityImage(np.ones(16), geom, 1)
    phd = PoissonIntensity(ParticleSet(np.array([[0.5, 0.5, 0, 0, 3.0]]), np.array([0.5])))
    w = build_weights(PmbState(k=1, phd=phd), image, NoiseModel(), geom)
    m = MarginalPmfs(legacy=(), new_cells=w.new.cells, p1=np.array([0.5]))
    result = mb_approximation(w, m, CFG, rng, first_track_id=3)
    (b,) = result.bernoullis
    assert b.r == pytest.approx(0.17651, abs=1e-5)
    assert b.track_id == 3
    assert result.next_track_id == 4


# ============================================
# recycle / cap
# ============================================

def test_recycle_threshold_split():
    kept, inc = recycle([_component(0.05, 0), _component(0.6, 1)], CFG)
    assert [b.track_id for b in kept] == [1]
    assert inc.mu == pytest.approx(0.05, abs=1e-9)


def test_recycle_nothing_below_threshold():
    kept, inc = recycle([_component(0.3), _component(0.9, 1)], CFG)
    assert len(kept) == 2
    assert inc.mu == 0.0


def test_recycle_everything():
    kept, inc = recycle([_component(0.09), _component(0.01, 1)], CFG)
    assert kept == ()
    assert inc.mu == pytest.approx(0.10, abs=1e-9)


def test_recycle_is_idempotent_on_kept():
    kept, _ = recycle([_component(0.05), _component(0.6, 1), _component(0.2, 2)], CFG)
    again, inc = recycle(kept, CFG)
    assert again == kept
    assert inc.mu == 0.0


def test_cap_phd_preserves_mass(rng):
    phd = PoissonIntensity(ParticleSet(rng.normal(size=(1_000, 5)), rng.uniform(size=1_000)))
    out = cap_phd(phd, CFG, rng)
    assert len(out) == CFG.n_phd_particles_cap
    assert out.mu == pytest.approx(phd.mu, abs=1e-9)


def test_cap_phd_under_budget_is_identity(rng):
    phd = PoissonIntensity(ParticleSet(rng.normal(size=(20, 5)), np.full(20, 0.1)))
    assert cap_phd(phd, CFG, rng) is phd


# ============================================
# estimates
# ============================================

def test_estimate_threshold():
    state = PmbState(k=1, bernoullis=(_component(0.51, 0, at=(3.0, 4.0)), _component(0.49, 1)))
    estimates = extract_estimates(state, UpdateConfig())
    assert [tid for tid, _, _ in estimates] == [0]
    assert estimates[0][1].position == pytest.approx((3.0, 4.0))


def test_no_components_no_estimates():
    assert extract_estimates(PmbState(k=0), UpdateConfig()) == []


# ============================================
# fused path
# ============================================

def test_fused_update_conserves_existence_mass(rng):
    geom = GridGeometry(width=8, height=8)
    noise = NoiseModel()
    values = rng.rayleigh(1.0, size=64)
    values[10] = 6.0
    values[30] = 4.0
    image = IntensityImage(values, geom, 2)

    legacy_states = np.zeros((40, 5))
    legacy_states[:, 0] = rng.uniform(2.0, 4.0, size=40)
    legacy_states[:, 1] = rng.uniform(1.0, 2.0, size=40)
    legacy_states[:, 4] = 10.0
    legacy = BernoulliComponent(r=0.7, spatial=ParticleSet(legacy_states, np.full(40, 1 / 40)), track_id=0)
    phd_states = np.zeros((500, 5))
    phd_states[:, 0:2] = rng.uniform(0, 8, size=(500, 2))
    phd_states[:, 4] = rng.uniform(0, 30, size=500)
    phd = PoissonIntensity(ParticleSet(phd_states, np.full(500, 2.0 / 500)))
    predicted = PmbState(k=2, bernoullis=(legacy,), phd=phd, next_track_id=1)

    w = build_weights(predicted, image, noise, geom, contribution="normalized")
    m = spa_marginals(w)
    expected = sum(leg.existence for leg in m.legacy) + float(np.sum(m.p1 * w.new.r))

    result = approximate_and_recycle(w, m, CFG, rng, track_ids=[0], first_track_id=1)
    total = sum(b.r for b in result.bernoullis) + result.phd_increment.mu
    assert total == pytest.approx(expected, abs=1e-9)
    for b in result.bernoullis:
        assert 0.0 <= b.r <= 1.0
        assert b.r >= CFG.eta_r
        assert len(b.spatial) == CFG.n_bernoulli_particles
    new_ids = [b.track_id for b in result.bernoullis if b.track_id != 0]
    assert new_ids == list(range(1, result.next_track_id))
