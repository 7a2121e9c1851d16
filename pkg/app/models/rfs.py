"""
Random finite set value types.

Numpy-backed containers for object states, weighted particle sets, Bernoulli
components, Poisson intensities (PHDs) and the joint Poisson/multi-Bernoulli
filter state. Instances are immutable after construction: array buffers are
copied on the way in and marked read-only.

State vectors are laid out as [p1, p2, v1, v2, gamma] (columns of the
particle state matrix).
"""

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

# ============================================
# State layout
# ============================================

STATE_DIM = 5
P1, P2, V1, V2, GAMMA = range(STATE_DIM)

# Relative tolerance for "normalized" and cached-total checks
WEIGHT_RTOL = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ObjectState:
    """A single object's kinematic and intensity state."""

    p1: float
    p2: float
    v1: float = 0.0
    v2: float = 0.0
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.p1, self.p2, self.v1, self.v2, self.gamma)):
            raise ValueError(f"Object state must be finite: {self}")

    @property
    def position(self) -> tuple[float, float]:
        return (self.p1, self.p2)

    def to_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.v1, self.v2, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "ObjectState":
        p1, p2, v1, v2, gamma = (float(v) for v in values)
        return cls(p1=p1, p2=p2, v1=v1, v2=v2, gamma=gamma)


@dataclass(frozen=True)
class Particle:
    """One weighted particle. Only used at API edges; sets store arrays."""

    state: ObjectState
    weight: float


# ============================================
# Particle sets
# ============================================

@dataclass(frozen=True, eq=False)
class ParticleSet:
    """
    Weighted particle set.

    states is an (N, 5) matrix, weights an (N,) vector of non-negative finite
    values. total_weight is cached at construction.
    """

    states: np.ndarray
    weights: np.ndarray
    total_weight: float = field(init=False)

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if states.size == 0:
            states = states.reshape(0, STATE_DIM)
        if states.ndim != 2 or states.shape[1] != STATE_DIM:
            raise ValueError(f"Particle states must have shape (N, {STATE_DIM}), got {states.shape}")
        if weights.shape != (states.shape[0],):
            raise ValueError(
                f"Expected {states.shape[0]} particle weights, got shape {weights.shape}"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("Particle weights must be finite and non-negative")
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "total_weight", float(weights.sum()))

    def __len__(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def empty(cls) -> "ParticleSet":
        return cls(np.empty((0, STATE_DIM)), np.empty(0))

    @classmethod
    def from_particles(cls, particles: Iterable[Particle]) -> "ParticleSet":
        particles = list(particles)
        if not particles:
            return cls.empty()
        states = np.stack([p.state.to_array() for p in particles])
        weights = np.array([p.weight for p in particles], dtype=float)
        return cls(states, weights)

    @property
    def particles(self) -> tuple[Particle, ...]:
        return tuple(
            Particle(ObjectState.from_array(s), float(w))
            for s, w in zip(self.states, self.weights)
        )

    @property
    def is_normalized(self) -> bool:
        return len(self) > 0 and abs(self.total_weight - 1.0) <= WEIGHT_RTOL

    def scaled(self, factor: float) -> "ParticleSet":
        """Same particles, every weight multiplied by factor."""
        return ParticleSet(self.states, self.weights * factor)

    def subset(self, mask: np.ndarray) -> "ParticleSet":
        return ParticleSet(self.states[mask], self.weights[mask])

    def with_weights(self, weights: np.ndarray) -> "ParticleSet":
        return ParticleSet(self.states, weights)

    @staticmethod
    def concatenate(sets: Iterable["ParticleSet"]) -> "ParticleSet":
        sets = [s for s in sets if len(s) > 0]
        if not sets:
            return ParticleSet.empty()
        return ParticleSet(
            np.concatenate([s.states for s in sets]),
            np.concatenate([s.weights for s in sets]),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"states": self.states.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ParticleSet":
        states = np.array(data["states"], dtype=float).reshape(-1, STATE_DIM)
        return cls(states, np.array(data["weights"], dtype=float))


# ============================================
# Bernoulli / Poisson / PMB
# ============================================

@dataclass(frozen=True, eq=False)
class BernoulliComponent:
    """Existence probability r plus a normalized particle representation of f(x)."""

    r: float
    spatial: ParticleSet
    track_id: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.r <= 1.0) or math.isnan(self.r):
            raise ValueError(f"Existence probability out of range: {self.r}")
        if self.r > 0 and not self.spatial.is_normalized:
            raise ValueError(
                f"Bernoulli {self.track_id}: spatial pdf must be a non-empty normalized set "
                f"(total weight {self.spatial.total_weight})"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"r": self.r, "track_id": self.track_id, "spatial": self.spatial.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BernoulliComponent":
        return cls(
            r=float(data["r"]),
            spatial=ParticleSet.from_dict(data["spatial"]),
            track_id=int(data["track_id"]),
        )


@dataclass(frozen=True, eq=False)
class PoissonIntensity:
    """PHD as a weighted particle set; total weight is the expected cardinality."""

    particles: ParticleSet = field(default_factory=ParticleSet.empty)

    @property
    def mu(self) -> float:
        return self.particles.total_weight

    def __len__(self) -> int:
        return len(self.particles)


@dataclass(frozen=True, eq=False)
class PmbState:
    """
    Poisson/multi-Bernoulli filter state at time k.

    next_track_id is the first identifier not yet handed out in this run.
    """

    k: int
    bernoullis: tuple[BernoulliComponent, ...] = ()
    phd: PoissonIntensity = field(default_factory=PoissonIntensity)
    next_track_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bernoullis", tuple(self.bernoullis))

    @property
    def n_components(self) -> int:
        return len(self.bernoullis)

    @classmethod
    def initial(cls, k: int = 0) -> "PmbState":
        return cls(k=k)

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "next_track_id": self.next_track_id,
            "bernoullis": [b.to_dict() for b in self.bernoullis],
            "phd": self.phd.particles.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PmbState":
        return cls(
            k=int(data["k"]),
            bernoullis=tuple(BernoulliComponent.from_dict(b) for b in data["bernoullis"]),
            phd=PoissonIntensity(ParticleSet.from_dict(data["phd"])),
            next_track_id=int(data["next_track_id"]),
        )

    def to_json(self) -> str:
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PmbState":
        return cls.from_dict(json.loads(text))
