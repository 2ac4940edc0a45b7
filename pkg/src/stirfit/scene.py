"""Scene description and time-series containers for the stirring rig.

Geometry follows the bench setup: a cylindrical container holding a known
fluid volume, and a cylindrical rod immersed from above that is dragged
along a recorded trajectory.  The vertical axis is +y, gravity points -y.
The rod pose is described by the position of its lower tip (base point),
a unit axis direction pointing from tip toward the handle, and a linear
velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Cylinder",
    "SimConfig",
    "StirScene",
    "RodTrajectory",
    "ForceTrace",
    "gen_trajectory",
    "speed_schedule_trajectory",
    "stationary_trajectory",
    "save_trajectory_csv",
    "load_trajectory_csv",
    "save_force_csv",
    "load_force_csv",
    "paper_scene",
    "desk_scene",
    "paper_config",
    "desk_config",
]

TRAJECTORY_HEADER = "t,px,py,pz,ax,ay,az,vx,vy,vz"
FORCE_HEADER = "t,f"


@dataclass(frozen=True)
class Cylinder:
    """Upright cylinder described by diameter and height/length (m)."""

    diameter: float
    height: float

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    @property
    def volume(self) -> float:
        return math.pi * self.radius**2 * self.height


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings of the MLS-MPM solver.

    Defaults reproduce the bench-scale reference configuration: dt = 1 ms,
    grid spacing 1 cm, 6500 particles, 8000 frames (8 s).  `domain_pad_cells`
    controls how far the background grid extends beyond the container.
    The force trace is reported along `horizontal_axis` (unit vector).
    """

    dt: float = 1e-3
    grid_dx: float = 0.01
    particle_count: int = 6500
    frame_count: int = 8000
    gravity: tuple = (0.0, -9.81, 0.0)
    deterministic: bool = True
    horizontal_axis: tuple = (1.0, 0.0, 0.0)
    shell_cells: float = 1.5
    domain_pad_cells: int = 3
    domain: tuple | None = None  # ((lox,loy,loz),(hix,hiy,hiz)); derived from the container when None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.grid_dx <= 0:
            raise ValueError("grid_dx must be > 0")
        if self.particle_count <= 0:
            raise ValueError("particle_count must be > 0")
        if self.frame_count < 0:
            raise ValueError("frame_count must be >= 0")
        ax = np.asarray(self.horizontal_axis, dtype=float)
        if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
            raise ValueError("horizontal_axis must be a unit vector")

    @property
    def shell_thickness(self) -> float:
        return self.shell_cells * self.grid_dx


@dataclass(frozen=True, eq=False)
class StirScene:
    """Physical stirring scene: container, fluid, rod, and rod motion.

    `container` may be None for open-domain test scenes (no wall/floor
    boundary).  `trajectory` may be None when the rod is absent.
    """

    fluid_density: float
    container: Cylinder | None = Cylinder(diameter=0.085, height=0.165)
    fill_volume: float = 738e-6
    rod: Cylinder = Cylinder(diameter=0.025, height=0.20)
    rod_immersion: float = 0.08
    trajectory: "RodTrajectory | None" = None
    center: tuple = (0.0, 0.0)  # container axis (x, z); floor sits at y = 0

    def __post_init__(self):
        if self.fluid_density <= 0:
            raise ValueError("fluid_density must be > 0")
        if self.fill_volume <= 0:
            raise ValueError("fill_volume must be > 0")
        if self.container is not None and self.fill_volume > self.container.volume * (1 + 1e-12):
            raise ValueError("fill_volume exceeds container volume")
        if self.rod_immersion > self.rod.height:
            raise ValueError("rod_immersion exceeds rod length")

    @property
    def fill_height(self) -> float:
        """Resting fluid column height for the given fill volume (m)."""
        if self.container is None:
            raise ValueError("fill_height undefined without a container")
        return self.fill_volume / (math.pi * self.container.radius**2)

    @property
    def rod_tip_height(self) -> float:
        """Height of the rod tip above the container floor at rest immersion."""
        return self.fill_height - self.rod_immersion

    def with_trajectory(self, trajectory: "RodTrajectory | None") -> "StirScene":
        return replace(self, trajectory=trajectory)

    def with_density(self, fluid_density: float) -> "StirScene":
        return replace(self, fluid_density=fluid_density)


@dataclass(eq=False)
class RodTrajectory:
    """Sampled rod motion: tip base point, unit axis, and linear velocity.

    Timestamps must be strictly increasing; axes unit-norm within 1e-9.
    Poses between samples are linearly interpolated; velocities are taken
    from the recorded samples rather than differentiated positions.
    """

    t: np.ndarray
    base: np.ndarray
    axis: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.base = np.asarray(self.base, dtype=float).reshape(len(self.t), 3)
        self.axis = np.asarray(self.axis, dtype=float).reshape(len(self.t), 3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(len(self.t), 3)
        if len(self.t) < 1:
            raise ValueError("trajectory needs at least one sample")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        norms = np.linalg.norm(self.axis, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("axis directions must be unit vectors")

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def sample(self, times) -> tuple:
        """Interpolate (base, axis, velocity) at the given times.

        Times must lie within the recorded span.  The axis is renormalized
        after interpolation.
        """
        times = np.asarray(times, dtype=float)
        if times.size and (times.min() < self.t[0] - 1e-12 or times.max() > self.t[-1] + 1e-12):
            raise ValueError("requested times outside trajectory span")
        base = np.stack([np.interp(times, self.t, self.base[:, i]) for i in range(3)], axis=-1)
        axis = np.stack([np.interp(times, self.t, self.axis[:, i]) for i in range(3)], axis=-1)
        axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
        vel = np.stack([np.interp(times, self.t, self.velocity[:, i]) for i in range(3)], axis=-1)
        return base, axis, vel

    @property
    def mean_speed(self) -> float:
        return float(np.mean(np.linalg.norm(self.velocity, axis=1)))


@dataclass(eq=False)
class ForceTrace:
    """Uniformly sampled horizontal rod-force series (N)."""

    dt_sample: float
    values: np.ndarray
    provenance: str = "calculated"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt_sample <= 0:
            raise ValueError("dt_sample must be > 0")
        if self.provenance not in ("measured", "calculated"):
            raise ValueError("provenance must be 'measured' or 'calculated'")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("values must be a 1-D series")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("force trace contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt_sample


# ---------------------------------------------------------------------------
# trajectory builders
# ---------------------------------------------------------------------------


def _circle_segment(radius, omega, tip_y, dt, nsteps, phase, center):
    tloc = np.arange(nsteps) * dt
    a = phase + omega * tloc
    base = np.stack(
        [center[0] + radius * np.cos(a), np.full(nsteps, tip_y), center[1] + radius * np.sin(a)],
        axis=1,
    )
    vel = np.stack(
        [-radius * omega * np.sin(a), np.zeros(nsteps), radius * omega * np.cos(a)],
        axis=1,
    )
    return base, vel, phase + omega * nsteps * dt


def _validate_orbit(scene: StirScene, radius: float) -> None:
    if radius < 0:
        raise ValueError("orbit radius must be >= 0")
    if scene.container is not None and radius + scene.rod.radius >= scene.container.radius:
        raise ValueError("rod orbit does not fit inside the container")


def gen_trajectory(
    scene: StirScene,
    radius: float,
    angular_speed: float,
    duration: float,
    dt: float,
    center=None,
    phase: float = 0.0,
) -> RodTrajectory:
    """Vertical rod tracing a horizontal circle at constant angular speed.

    The rod axis stays vertical; the tip height comes from the scene's fill
    level and immersion depth.  Velocities are the analytic derivatives of
    the circular path.  Produces duration/dt + 1 samples.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    _validate_orbit(scene, radius)
    if center is None:
        center = scene.center
    n = int(round(duration / dt)) + 1
    base, vel, _ = _circle_segment(radius, angular_speed, scene.rod_tip_height, dt, n, phase, center)
    t = np.arange(n) * dt
    axis = np.tile([0.0, 1.0, 0.0], (n, 1))
    return RodTrajectory(t=t, base=base, axis=axis, velocity=vel)


def speed_schedule_trajectory(
    scene: StirScene,
    radius: float,
    phases,
    dt: float,
    center=None,
) -> RodTrajectory:
    """Circular stirring through a sequence of (angular_speed, duration) phases.

    The orbit angle is continuous across phase boundaries, so the rod sweeps
    one unbroken path while stepping through stirring speeds.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    _validate_orbit(scene, radius)
    if center is None:
        center = scene.center
    bases, vels = [], []
    ang = 0.0
    for omega, duration in phases:
        n = max(int(round(duration / dt)), 1)
        b, v, ang = _circle_segment(radius, omega, scene.rod_tip_height, dt, n, ang, center)
        bases.append(b)
        vels.append(v)
    base = np.concatenate(bases)
    vel = np.concatenate(vels)
    # closing sample so the span covers the final frame
    base = np.vstack([base, base[-1]])
    vel = np.vstack([vel, vel[-1]])
    n = base.shape[0]
    t = np.arange(n) * dt
    axis = np.tile([0.0, 1.0, 0.0], (n, 1))
    return RodTrajectory(t=t, base=base, axis=axis, velocity=vel)


def stationary_trajectory(scene: StirScene, duration: float, position=None) -> RodTrajectory:
    """Rod held still (dry-run style) for the given duration."""
    if position is None:
        position = scene.center
    t = np.array([0.0, duration])
    base = np.tile([position[0], scene.rod_tip_height, position[1]], (2, 1))
    axis = np.tile([0.0, 1.0, 0.0], (2, 1))
    vel = np.zeros((2, 3))
    return RodTrajectory(t=t, base=base, axis=axis, velocity=vel)


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def save_trajectory_csv(path, traj: RodTrajectory) -> None:
    data = np.column_stack([traj.t, traj.base, traj.axis, traj.velocity])
    np.savetxt(path, data, delimiter=",", header=TRAJECTORY_HEADER, comments="")


def load_trajectory_csv(path) -> RodTrajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 10:
        raise ValueError("trajectory CSV must have 10 columns: " + TRAJECTORY_HEADER)
    return RodTrajectory(t=data[:, 0], base=data[:, 1:4], axis=data[:, 4:7], velocity=data[:, 7:10])


def save_force_csv(path, trace: ForceTrace) -> None:
    data = np.column_stack([trace.times, trace.values])
    np.savetxt(path, data, delimiter=",", header=FORCE_HEADER, comments="")


def load_force_csv(path, provenance: str = "measured") -> ForceTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("force CSV must have 2 columns: " + FORCE_HEADER)
    t, f = data[:, 0], data[:, 1]
    if len(t) > 1:
        steps = np.diff(t)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(steps[0], 1e-12):
            raise ValueError("force CSV must be uniformly sampled")
        dt = float(steps[0])
    else:
        dt = 1.0
    return ForceTrace(dt_sample=dt, values=f, provenance=provenance)


# ---------------------------------------------------------------------------
# reference scenes
# ---------------------------------------------------------------------------


def paper_scene(fluid_density: float = 1000.0) -> StirScene:
    """Bench-reference geometry: 8.5 x 16.5 cm container, 738 ml fill,
    2.5 x 20 cm rod immersed 8 cm."""
    return StirScene(fluid_density=fluid_density)


def paper_config() -> SimConfig:
    """Reference solver settings: dt 1 ms, dx 1 cm, 6500 particles, 8000 frames."""
    return SimConfig()


def desk_scene(fluid_density: float = 1000.0) -> StirScene:
    """Reduced fill for quick fits: same container and rod, 190 ml fill,
    2.1 cm immersion.  Matched to desk_config's particle count (about 4.5
    particles per occupied grid cell at dx = 1 cm)."""
    return StirScene(
        fluid_density=fluid_density,
        fill_volume=190e-6,
        rod_immersion=0.021,
    )


def desk_config(frame_count: int = 500) -> SimConfig:
    return SimConfig(particle_count=750, frame_count=frame_count)
