"""
Scenario simulator.

Ground-truth trajectories for a fixed number of objects with random birth and
death steps, plus Rayleigh intensity images rendered from them. Truth draws
come from the truth stream of a seed and every frame from its own (seed, k)
stream, so frames are reproducible independently of each other.
"""

import logging
from dataclasses import dataclass
from typing import Any, Iterator, Optional

import numpy as np

from app.models.rfs import GAMMA, P1, P2, STATE_DIM, V1, ObjectState
from app.models.schemas import GridGeometry, NoiseModel, ScenarioConfig
from app.services.dynamics_service import propagate_states
from app.services.measurement_service import OUTSIDE, IntensityImage, state_cells
from app.utils.rng_utils import frame_rng, truth_rng

logger = logging.getLogger("tbdtrack.simulation")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One object: alive on [birth, death); states[i] is the state at birth + i."""

    object_id: int
    birth: int
    death: int
    states: np.ndarray

    def alive(self, k: int) -> bool:
        return self.birth <= k < self.death

    def state_at(self, k: int) -> ObjectState:
        if not self.alive(k):
            raise ValueError(f"Object {self.object_id} is not alive at k={k}")
        return ObjectState.from_array(self.states[k - self.birth])


@dataclass(frozen=True, eq=False)
class GroundTruth:
    trajectories: tuple[Trajectory, ...]
    n_steps: int

    def alive_at(self, k: int) -> list[tuple[int, ObjectState]]:
        return [(t.object_id, t.state_at(k)) for t in self.trajectories if t.alive(k)]

    def states_at(self, k: int) -> np.ndarray:
        """(n_alive, 5) state matrix at k."""
        rows = [t.states[k - t.birth] for t in self.trajectories if t.alive(k)]
        return np.array(rows).reshape(-1, STATE_DIM)

    def positions_at(self, k: int) -> np.ndarray:
        return self.states_at(k)[:, [P1, P2]]

    def records(self) -> Iterator[dict[str, Any]]:
        """One JSON-ready record per (object, k), ordered by k then object."""
        for k in range(1, self.n_steps + 1):
            for object_id, x in self.alive_at(k):
                yield {
                    "k": k,
                    "object_id": object_id,
                    "position": [x.p1, x.p2],
                    "velocity": [x.v1, x.v2],
                    "gamma": x.gamma,
                }

    @classmethod
    def from_records(cls, records: list[dict[str, Any]], n_steps: Optional[int] = None) -> "GroundTruth":
        by_object: dict[int, list[tuple[int, list[float]]]] = {}
        for rec in records:
            state = [*rec["position"], *rec["velocity"], rec["gamma"]]
            by_object.setdefault(int(rec["object_id"]), []).append((int(rec["k"]), state))
        trajectories = []
        for object_id, rows in sorted(by_object.items()):
            rows.sort(key=lambda r: r[0])
            birth = rows[0][0]
            trajectories.append(
                Trajectory(
                    object_id=object_id,
                    birth=birth,
                    death=birth + len(rows),
                    states=np.array([r[1] for r in rows], dtype=float),
                )
            )
        horizon = n_steps or max((t.death - 1 for t in trajectories), default=0)
        return cls(trajectories=tuple(trajectories), n_steps=horizon)


def generate_truth(cfg: ScenarioConfig, rng: np.random.Generator) -> GroundTruth:
    """
    Sample trajectories.

    Birth step uniform on [1, appear_before], scheduled death uniform on
    [disappear_after, n_steps]; an object that leaves the ROI dies at the
    step it first lies outside. Initial position uniform in the birth region,
    velocity N(0, init_velocity_var·I₂), intensity gamma_init.
    """
    region = cfg.birth_region
    roi = cfg.roi
    trajectories = []
    for object_id in range(cfg.n_objects):
        birth = int(rng.integers(1, cfg.appear_before + 1))
        death = int(rng.integers(cfg.disappear_after, cfg.n_steps + 1))
        x = np.empty(STATE_DIM)
        x[P1] = rng.uniform(region.x_min, region.x_max)
        x[P2] = rng.uniform(region.y_min, region.y_max)
        x[V1:GAMMA] = rng.normal(0.0, np.sqrt(cfg.init_velocity_var), size=2)
        x[GAMMA] = cfg.gamma_init
        states = [x]
        for k in range(birth + 1, death):
            x = propagate_states(x[None, :], cfg.dynamics, rng)[0]
            if not (roi.x_min <= x[P1] < roi.x_max and roi.y_min <= x[P2] < roi.y_max):
                death = k
                break
            states.append(x)
        trajectories.append(Trajectory(object_id, birth, death, np.array(states)))
    return GroundTruth(trajectories=tuple(trajectories), n_steps=cfg.n_steps)


def render_image(
    states: np.ndarray,
    noise: NoiseModel,
    geom: GridGeometry,
    rng: np.random.Generator,
    k: int = 0,
) -> IntensityImage:
    """
    Draw one frame.

    Empty cells are Rayleigh(σ_n). An occupied cell is Rayleigh with scale
    sqrt(max(γ, 0) + σ_n²) of one occupying object, picked with probability
    proportional to γ when several share the cell.
    """
    cells = rng.rayleigh(noise.sigma_n, size=geom.n_cells)
    states = np.asarray(states, dtype=float).reshape(-1, STATE_DIM)
    if states.shape[0] == 0:
        return IntensityImage(cells, geom, k)

    occupied = state_cells(geom, states)
    gamma = np.maximum(states[:, GAMMA], 0.0)
    for cell in np.unique(occupied[occupied != OUTSIDE]).tolist():
        members = np.flatnonzero(occupied == cell)
        if members.size == 1:
            chosen = members[0]
        else:
            g = gamma[members]
            p = g / g.sum() if g.sum() > 0 else None
            chosen = rng.choice(members, p=p)
        cells[cell] = rng.rayleigh(np.sqrt(gamma[chosen] + noise.sigma_n**2))
    return IntensityImage(cells, geom, k)


def render_frames(truth: GroundTruth, cfg: ScenarioConfig, seed: int) -> Iterator[IntensityImage]:
    """Frames k = 1..n_steps, each from its own (seed, k) stream."""
    for k in range(1, truth.n_steps + 1):
        yield render_image(truth.states_at(k), cfg.noise, cfg.geometry, frame_rng(seed, k), k)


def simulate(cfg: ScenarioConfig, seed: Optional[int] = None) -> tuple[GroundTruth, list[IntensityImage]]:
    """Truth and all frames for one seed (defaults to cfg.seed)."""
    seed = cfg.seed if seed is None else seed
    truth = generate_truth(cfg, truth_rng(seed))
    frames = list(render_frames(truth, cfg, seed))
    logger.debug("[SIM] seed=%d objects=%d frames=%d", seed, len(truth.trajectories), len(frames))
    return truth, frames
