"""Insertion objective: depth error plus weighted tactile strain."""
from __future__ import annotations

from dataclasses import dataclass

LAMBDA_STRAIN = 0.0005
SUCCESS_EPSILON = 0.0005
STRAIN_ABORT_PX = 40.0

# Keyhole offsets d per lock (meters); the disc-detainer used 19 mm early on.
LOCK_DEPTHS = {
    "PinTumbler": 0.018,
    "Dimpled": 0.019,
    "Tubular": 0.007,
    "DiscDetainer": 0.014,
}
DISC_DETAINER_EARLY_DEPTH = 0.019


@dataclass(frozen=True)
class ObjectiveConfig:
    depth_d: float
    y0: float = 0.0
    lam: float = LAMBDA_STRAIN
    success_epsilon: float = SUCCESS_EPSILON
    strain_abort: float = STRAIN_ABORT_PX

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not self.depth_d > 0:
            raise ValueError("depth_d must be > 0")
        if not self.success_epsilon > 0:
            raise ValueError("success_epsilon must be > 0")
        if not self.strain_abort > 0:
            raise ValueError("strain_abort must be > 0")
        # strain term at the abort limit must stay commensurate with the depth term
        if self.lam * self.strain_abort > 10.0 * self.depth_d:
            raise ValueError(
                f"lambda={self.lam} makes {self.strain_abort} px of strain outweigh "
                f"depth {self.depth_d} m by more than 10x")

    @property
    def target_y(self) -> float:
        return self.y0 - self.depth_d

    def with_y0(self, y0: float) -> "ObjectiveConfig":
        return ObjectiveConfig(self.depth_d, y0, self.lam, self.success_epsilon,
                               self.strain_abort)


def insertion_loss(y: float, cfg: ObjectiveConfig) -> float:
    """Distance in meters from the tip to the target depth (insertion runs along -Y)."""
    return abs(y - (cfg.y0 - cfg.depth_d))


def total_loss(insertion: float, strain: float, cfg: ObjectiveConfig) -> float:
    return insertion + cfg.lam * strain


def check_success(insertion: float, cfg: ObjectiveConfig) -> bool:
    return insertion < cfg.success_epsilon
