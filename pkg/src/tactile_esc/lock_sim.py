"""Kinematic key/lock plant and synthetic gel-pad rendering.

Lock frame: keyhole center at (x, z) = keyhole_center, lock face top at
y = 0, insertion along -Y. The gel compliance is folded into a projection:
the achieved tip position is the feasible point nearest the commanded one
(1 mm weighs the same as 1 deg), and the strain is a spring on the
remaining commanded-minus-achieved gap.

Feasible set = union of
  * the half-space above the face top (y >= 0),
  * the chamfer funnel, y >= mouth + slope * e, with e the lateral distance
    outside the keyhole footprint,
  * the lowered face around a raised keyhole (Dimpled),
  * the keyhole channel, whose reachable depth shrinks when the key is
    tilted past the orientation tolerance (jam depth = clearance / tan(excess)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .esc import Pose6
from .objective import LOCK_DEPTHS
from .texture import FRAME_HEIGHT, FRAME_WIDTH, procedural_texture, render_homography, render_reference
from .tracker import Frame, homography_from_corners, patch_corners

ARCHETYPES = ("PinTumbler", "Dimpled", "Tubular", "DiscDetainer")

MM = 1e-3
DEG = math.pi / 180.0
KAPPA_PX_PER_MM = 10.0
_INSIDE_TOL = 1e-9


@dataclass(frozen=True)
class LockModel:
    """Geometry and contact constants of one lock face; lengths in m, angles in rad."""

    archetype: str
    depth_d: float
    keyhole_center: tuple[float, float] = (0.0, 0.0)
    keyhole_halfwidths: tuple[float, float] = (0.3 * MM, 0.3 * MM)
    round_keyhole: bool = False
    chamfer_width: float = 0.0
    chamfer_depth: float = 0.0
    plateau_height: float = 0.0
    plateau_extent: float = 0.0
    orientation_tolerance: tuple[float, float, float] = (3 * DEG, 3 * DEG, 3 * DEG)
    jam_clearance: tuple[float, float, float] = (0.3 * MM, 0.3 * MM, 0.3 * MM)
    wedge_enabled: bool = False
    wedge_edge: float = 0.1 * MM
    wedge_trigger_px: float = 6.0
    wedge_release_px: float = 2.0
    kappa: float = KAPPA_PX_PER_MM
    noise_sigma: float = 0.0
    keyway_extra: float = 2.0 * MM

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")
        if min(self.keyhole_halfwidths) <= 0:
            raise ValueError("keyhole half-widths must be > 0")
        if not self.depth_d > 0:
            raise ValueError("depth_d must be > 0")
        if self.chamfer_width < 0 or self.chamfer_depth < 0:
            raise ValueError("chamfer dimensions must be >= 0")
        if (self.chamfer_width == 0) != (self.chamfer_depth == 0):
            raise ValueError("chamfer width and depth must both be zero or both positive")
        if self.plateau_height < 0 or self.plateau_extent < 0:
            raise ValueError("plateau dimensions must be >= 0")
        if self.plateau_height > 0 and self.plateau_extent <= self.chamfer_width:
            raise ValueError("plateau must extend past the chamfer")
        if min(self.orientation_tolerance) < 0 or min(self.jam_clearance) <= 0:
            raise ValueError("orientation tolerances must be >= 0 and jam clearances > 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")

    @property
    def mouth(self) -> float:
        """Y of the keyhole entrance (bottom of the chamfer)."""
        return -self.chamfer_depth

    @property
    def floor(self) -> float:
        return self.mouth - self.depth_d - self.keyway_extra

    @property
    def slope(self) -> float:
        return self.chamfer_depth / self.chamfer_width if self.chamfer_width > 0 else 0.0

    def with_depth(self, depth_d: float) -> "LockModel":
        return replace(self, depth_d=depth_d)


def preset(archetype: str) -> LockModel:
    """Lock archetype with its published depth offset and modelled face geometry."""
    if archetype == "PinTumbler":
        return LockModel("PinTumbler", depth_d=LOCK_DEPTHS["PinTumbler"], chamfer_width=2.0 * MM,
                         chamfer_depth=1.0 * MM, wedge_enabled=True)
    if archetype == "Dimpled":
        return LockModel("Dimpled", depth_d=LOCK_DEPTHS["Dimpled"], chamfer_width=1.6 * MM,
                         chamfer_depth=0.6 * MM, plateau_height=1.0 * MM,
                         plateau_extent=3.0 * MM, wedge_enabled=True)
    if archetype == "Tubular":
        return LockModel("Tubular", depth_d=LOCK_DEPTHS["Tubular"], keyhole_halfwidths=(0.8 * MM, 0.8 * MM),
                         round_keyhole=True,
                         orientation_tolerance=(3 * DEG, 0.75 * DEG, 3 * DEG))
    if archetype == "DiscDetainer":
        return LockModel("DiscDetainer", depth_d=LOCK_DEPTHS["DiscDetainer"], chamfer_width=3.5 * MM,
                         chamfer_depth=2.5 * MM)
    raise ValueError(f"unknown archetype {archetype!r}; expected one of {ARCHETYPES}")


@dataclass
class PlantState:
    """Achieved key pose and contact readout after a plant step."""

    achieved_pose: np.ndarray = field(default_factory=lambda: np.zeros(6))
    commanded_pose: np.ndarray = field(default_factory=lambda: np.zeros(6))
    contact_strain: float = 0.0
    inserted_depth: float = 0.0
    wedged: bool = False
    wedge_y: float = 0.0
    region: str = "free"
    reaction_px: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @property
    def achieved(self) -> Pose6:
        return Pose6.from_array(self.achieved_pose)


def _to_mm_deg(delta: np.ndarray) -> np.ndarray:
    out = np.empty(6)
    out[:3] = delta[:3] / MM
    out[3:] = delta[3:] / DEG
    return out


def footprint_offset(lock: LockModel, dx: float, dz: float):
    """Distance ``e`` outside the keyhole footprint and the nearest footprint point."""
    hx, hz = lock.keyhole_halfwidths
    if lock.round_keyhole:
        r = math.hypot(dx, dz)
        if r <= hx:
            return 0.0, dx, dz
        return r - hx, dx * hx / r, dz * hx / r
    qx = min(max(dx, -hx), hx)
    qz = min(max(dz, -hz), hz)
    return math.hypot(dx - qx, dz - qz), qx, qz


def jam_depth(lock: LockModel, angles) -> float:
    """How far past the mouth a key tilted by ``angles`` can enter before jamming."""
    depth = math.inf
    for a, tol, clr in zip(angles, lock.orientation_tolerance, lock.jam_clearance):
        excess = abs(a) - tol
        if excess > 0:
            depth = min(depth, clr / math.tan(min(excess, 0.5 * math.pi - 1e-9)))
    return depth


def channel_floor(lock: LockModel, angles) -> float:
    return max(lock.mouth - jam_depth(lock, angles), lock.floor)


def surface_height(lock: LockModel, x: float, z: float) -> float:
    """Lowest feasible tip Y outside the keyhole channel at lateral position (x, z)."""
    e, _, _ = footprint_offset(lock, x - lock.keyhole_center[0], z - lock.keyhole_center[1])
    h = 0.0
    if lock.chamfer_width > 0 and e < lock.chamfer_width:
        h = lock.mouth + lock.slope * e
    if lock.plateau_height > 0 and e >= lock.plateau_extent - _INSIDE_TOL:
        h = min(h, -lock.plateau_height)
    return h


def _candidates(lock: LockModel, dx, y, dz, e, qx, qz, y_channel, pieces):
    """Nearest point (dx, y, dz) on each requested feasible piece."""
    out = []
    for piece in pieces:
        if piece == "top":
            out.append(("top", dx, max(y, 0.0), dz))
        elif piece == "funnel":
            if lock.chamfer_width == 0:
                continue
            m, s = lock.mouth, lock.slope
            if y >= m + s * e:
                out.append(("funnel", dx, y, dz))
            elif e == 0.0:
                out.append(("funnel", dx, m, dz))
            else:
                e2 = (e + s * (y - m)) / (1.0 + s * s)
                if e2 > 0:
                    f = e2 / e
                    out.append(("funnel", qx + (dx - qx) * f, m + s * e2, qz + (dz - qz) * f))
                else:
                    out.append(("funnel", qx, m, qz))
        elif piece == "lowered":
            if lock.plateau_height == 0:
                continue
            ep = lock.plateau_extent
            yl = max(y, -lock.plateau_height)
            if e >= ep:
                out.append(("lowered", dx, yl, dz))
            elif e > 0:
                f = ep / e
                out.append(("lowered", qx + (dx - qx) * f, yl, qz + (dz - qz) * f))
            else:
                # over the keyhole: push out along the shorter footprint axis
                hx, hz = lock.keyhole_halfwidths
                out.append(("lowered", dx, yl, math.copysign(hz + ep, dz if dz else 1.0)))
        elif piece == "channel":
            out.append(("channel", qx, max(y, y_channel), qz))
    return out


def plant_step(lock: LockModel, state: PlantState, commanded, dt: float,
               rng: np.random.Generator | None = None) -> PlantState:
    """Move the key toward ``commanded`` as far as the lock geometry allows."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    cmd = commanded.to_array() if isinstance(commanded, Pose6) else np.asarray(commanded, float)
    if cmd.shape != (6,) or not np.all(np.isfinite(cmd)):
        raise ValueError(f"commanded pose must be 6 finite values, got {cmd}")
    target = cmd
    if lock.noise_sigma > 0 and rng is not None:
        target = cmd.copy()
        target[:3] += rng.normal(0.0, lock.noise_sigma, 3)

    cx, cz = lock.keyhole_center
    dx, y, dz = target[0] - cx, target[1], target[2] - cz
    angles = target[3:]
    e, qx, qz = footprint_offset(lock, dx, dz)
    y_channel = channel_floor(lock, angles)

    if state.region == "channel" and y < lock.mouth:
        pieces = ("channel",)
    elif state.region == "lowered" and y < 0.0:
        pieces = ("lowered", "top")
    elif e <= lock.chamfer_width:
        pieces = ("top", "funnel", "lowered", "channel")
    else:
        # outside the funnel the face blocks: no sliding sideways into the keyhole
        pieces = ("top", "funnel", "lowered")
    best = None
    for name, px, py, pz in _candidates(lock, dx, y, dz, e, qx, qz, y_channel, pieces):
        d2 = (px - dx) ** 2 + (py - y) ** 2 + (pz - dz) ** 2
        if best is None or d2 < best[0]:
            best = (d2, name, px, py, pz)
    _, name, px, py, pz = best

    achieved = target.copy()
    achieved[0], achieved[1], achieved[2] = px + cx, py, pz + cz
    region = name
    if name == "channel" and py >= lock.mouth - _INSIDE_TOL:
        region = "free"
    elif name == "lowered" and py >= 0.0:
        region = "free"
    elif name in ("top", "funnel"):
        region = "free"

    wedged, wedge_y = state.wedged, state.wedge_y
    if region != "channel":
        wedged = False
    reaction = lock.kappa * _to_mm_deg(cmd - achieved)
    strain = math.hypot(*reaction)
    if lock.wedge_enabled and region == "channel":
        if wedged:
            if achieved[1] < wedge_y:
                achieved[1] = wedge_y
                reaction = lock.kappa * _to_mm_deg(cmd - achieved)
                strain = math.hypot(*reaction)
            if strain < lock.wedge_release_px:
                wedged = False
        elif state.region == "channel":
            lateral_excess = math.hypot(dx - qx, dz - qz)
            jammed = y < y_channel and y_channel > lock.floor
            if jammed and lateral_excess >= lock.wedge_edge and strain >= lock.wedge_trigger_px:
                wedged, wedge_y = True, achieved[1]

    return PlantState(
        achieved_pose=achieved,
        commanded_pose=cmd.copy(),
        contact_strain=strain,
        inserted_depth=min(max(-achieved[1], 0.0), lock.depth_d),
        wedged=wedged,
        wedge_y=wedge_y,
        region=region,
        reaction_px=reaction,
    )


def initial_state(lock: LockModel, commanded) -> PlantState:
    """Plant state for a key placed at ``commanded`` from free space above the lock."""
    return plant_step(lock, PlantState(), commanded, 1.0)


@dataclass(frozen=True)
class GelRenderConfig:
    texture_seed: int = 0
    displacement_gain: float = 0.5
    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT
    margin: float = 0.1

    def __post_init__(self):
        if not self.displacement_gain > 0:
            raise ValueError("displacement_gain must be > 0")


class GelRenderer:
    """Caches the texture for one render configuration."""

    def __init__(self, cfg: GelRenderConfig):
        self.cfg = cfg
        self.texture = procedural_texture(cfg.texture_seed, cfg.width, cfg.height)
        self.corners = patch_corners(cfg.width, cfg.height, cfg.margin)
        center = self.corners.mean(axis=0)
        self.radial = self.corners - center
        self.radius = float(np.linalg.norm(self.radial[0]))
        self.tangential = np.stack([-self.radial[:, 1], self.radial[:, 0]], axis=1)

    def corner_displacements(self, reaction_px) -> np.ndarray:
        """Lateral -> translation, normal load -> scale, torque about Y -> rotation."""
        r = np.asarray(reaction_px, float)
        g = self.cfg.displacement_gain
        normal = math.copysign(math.sqrt(r[1] ** 2 + r[3] ** 2 + r[5] ** 2), r[1] if r[1] else 1.0)
        shift = g * np.array([r[0], r[2]])
        return (shift[None, :] + (g * normal / self.radius) * self.radial
                + (g * r[4] / self.radius) * self.tangential)

    def render(self, state: PlantState | None) -> Frame:
        if state is None:
            return Frame(render_reference(self.texture, self.cfg.width, self.cfg.height))
        if not np.any(state.reaction_px):
            return Frame(render_reference(self.texture, self.cfg.width, self.cfg.height))
        disp = self.corner_displacements(state.reaction_px)
        H = homography_from_corners(self.corners, self.corners + disp)
        return Frame(render_homography(self.texture, H, self.cfg.width, self.cfg.height))


def render_gel_frame(cfg: GelRenderConfig, state: PlantState | None) -> Frame:
    return GelRenderer(cfg).render(state)
