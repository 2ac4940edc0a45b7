"""Forward MLS-MPM fluid solver with a kinematic stirring-rod collider.

One step runs the usual three phases:

  P2G   scatter mass and momentum to the background grid with quadratic
        B-spline weights; the MLS-MPM fused term combines the per-particle
        affine velocity matrix C with the constitutive Cauchy stress.
  grid  normalize momentum, apply gravity, container slip boundary, and the
        rod's no-slip kinematic constraint.
  G2P   gather velocity and C back, advect positions, and update the volume
        ratio J multiplicatively from trace(C).

Two rod-force estimators are provided: a traction integral over particles in
a thin shell around the rod surface (the per-step trace recorded by
rollout), and a momentum-impulse sum over rod-constrained grid nodes used as
an independent cross-check.  Both report the fluid-on-rod reaction along the
configured horizontal axis.

All heavy math is jax-jitted; compiled kernels are cached per grid shape,
particle count, and constitutive kind, so repeated rollouts do not retrace.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache, partial

import jax
import jax.numpy as jnp
import numpy as np

from .constitutive import FluidModel, ModelKind, param_vector, viscosity_fn
from .scene import ForceTrace, SimConfig, StirScene

jax.config.update("jax_enable_x64", True)

__all__ = [
    "ParticleSystem",
    "GridField",
    "RolloutResult",
    "SimulationUnstableError",
    "seed_particles",
    "box_particles",
    "step",
    "rollout",
    "settle",
    "rod_force_stress_integral",
    "rod_force_grid_impulse",
]

_OFFSETS = np.array([[i, j, k] for i in range(3) for j in range(3) for k in range(3)])


class SimulationUnstableError(RuntimeError):
    """Raised when a rollout step produces a CFL violation, an escaped
    particle, or a non-finite state."""

    def __init__(self, frame: int, reason: str = "instability"):
        super().__init__(f"simulation unstable at frame {frame}: {reason}")
        self.frame = frame


@dataclass(eq=False)
class ParticleSystem:
    """Material point state; arrays are row-per-particle."""

    position: np.ndarray
    velocity: np.ndarray
    affine: np.ndarray
    J: np.ndarray
    mass: np.ndarray
    rest_volume: np.ndarray

    def __post_init__(self):
        n = len(self.position)
        self.position = np.asarray(self.position, dtype=float).reshape(n, 3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(n, 3)
        self.affine = np.asarray(self.affine, dtype=float).reshape(n, 3, 3)
        self.J = np.asarray(self.J, dtype=float).reshape(n)
        self.mass = np.asarray(self.mass, dtype=float).reshape(n)
        self.rest_volume = np.asarray(self.rest_volume, dtype=float).reshape(n)
        if np.any(self.J <= 0):
            raise ValueError("volume ratios must be > 0")

    @property
    def count(self) -> int:
        return len(self.position)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.mass))

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            self.position.copy(), self.velocity.copy(), self.affine.copy(),
            self.J.copy(), self.mass.copy(), self.rest_volume.copy(),
        )


@dataclass(eq=False)
class GridField:
    """Background-grid state after one step's boundary phase."""

    dims: tuple
    origin: np.ndarray
    dx: float
    mass: np.ndarray               # (M,)
    momentum: np.ndarray           # (M, 3) raw P2G momentum
    velocity: np.ndarray           # (M, 3) after all boundary conditions
    velocity_pre_rod: np.ndarray   # (M, 3) before the rod constraint
    rod_mask: np.ndarray           # (M,) nodes under the rod constraint


@dataclass(eq=False)
class RolloutResult:
    trace: ForceTrace
    final_state: ParticleSystem
    impulse_trace: ForceTrace | None = None


# ---------------------------------------------------------------------------
# geometry and seeding
# ---------------------------------------------------------------------------


def _domain_bounds(scene: StirScene, config: SimConfig):
    if config.domain is not None:
        lo, hi = config.domain
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if scene.container is None:
        raise ValueError("scene without container needs an explicit config.domain")
    pad = config.domain_pad_cells * config.grid_dx
    R = scene.container.radius
    cx, cz = scene.center
    headroom = max(0.04, 0.5 * scene.fill_height)
    y_top = min(scene.fill_height + headroom, scene.container.height)
    lo = np.array([cx - R - pad, -pad, cz - R - pad])
    hi = np.array([cx + R + pad, y_top + pad, cz + R + pad])
    return lo, hi


@dataclass(eq=False)
class _GridGeom:
    dims: tuple
    lo: np.ndarray
    node_pos: np.ndarray
    wall_rr: np.ndarray
    wall_rhat: np.ndarray


def _grid_geometry(scene: StirScene, config: SimConfig) -> _GridGeom:
    lo, hi = _domain_bounds(scene, config)
    dx = config.grid_dx
    dims = tuple(int(math.ceil((hi[i] - lo[i]) / dx)) + 1 for i in range(3))
    ii, jj, kk = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    node_pos = np.stack(
        [lo[0] + ii * dx, lo[1] + jj * dx, lo[2] + kk * dx], axis=-1
    ).reshape(-1, 3)
    if scene.container is not None:
        cx, cz = scene.center
        rx = node_pos[:, 0] - cx
        rz = node_pos[:, 2] - cz
        rr = np.sqrt(rx**2 + rz**2)
        rhat = np.zeros_like(node_pos)
        m = rr > 0
        rhat[m, 0] = rx[m] / rr[m]
        rhat[m, 2] = rz[m] / rr[m]
    else:
        rr = np.zeros(node_pos.shape[0])
        rhat = np.zeros_like(node_pos)
    return _GridGeom(dims=dims, lo=lo, node_pos=node_pos, wall_rr=rr, wall_rhat=rhat)


def seed_particles(scene: StirScene, config: SimConfig, rng_seed: int) -> ParticleSystem:
    """Fill the container with particles uniformly up to the fill height.

    Every particle carries mass rho*fill_volume/count and rest volume
    fill_volume/count; J = 1, velocity and affine matrix zero.  The same
    seed always reproduces the same particle set.
    """
    if scene.container is None:
        raise ValueError("seed_particles requires a container")
    h = scene.fill_height
    if h > scene.container.height:
        raise ValueError("fluid fill height exceeds container height")
    n = config.particle_count
    rng = np.random.default_rng(rng_seed)
    cx, cz = scene.center
    r = scene.container.radius * np.sqrt(rng.random(n))
    th = 2.0 * np.pi * rng.random(n)
    y = h * rng.random(n)
    pos = np.stack([cx + r * np.cos(th), y, cz + r * np.sin(th)], axis=1)
    v0 = scene.fill_volume / n
    m0 = scene.fluid_density * scene.fill_volume / n
    return ParticleSystem(
        position=pos,
        velocity=np.zeros((n, 3)),
        affine=np.zeros((n, 3, 3)),
        J=np.ones(n),
        mass=np.full(n, m0),
        rest_volume=np.full(n, v0),
    )


def box_particles(center, size, count, density, rng_seed: int = 0, velocity=(0.0, 0.0, 0.0)) -> ParticleSystem:
    """Uniform particle blob in an axis-aligned box; for open-domain tests."""
    rng = np.random.default_rng(rng_seed)
    center = np.asarray(center, dtype=float)
    size = np.asarray(size, dtype=float)
    pos = center + (rng.random((count, 3)) - 0.5) * size
    vol = float(np.prod(size))
    return ParticleSystem(
        position=pos,
        velocity=np.tile(np.asarray(velocity, dtype=float), (count, 1)),
        affine=np.zeros((count, 3, 3)),
        J=np.ones(count),
        mass=np.full(count, density * vol / count),
        rest_volume=np.full(count, vol / count),
    )


# ---------------------------------------------------------------------------
# compiled step kernel
# ---------------------------------------------------------------------------


def _advance(state4, xs, theta, dyn, geom, kind, has_container, return_grid=False):
    """One MLS-MPM step.  Pure function of its inputs; jit/vjp-safe.

    state4 = (x, v, C, J); xs carries the per-step rod pose, the viscosity
    scale, and the step index.  dyn holds dt, kappa, masses, and geometry
    scalars as traced values so one compiled kernel serves many scenes of
    equal shape.  Returns (state4, f_stress, f_impulse, bad_flag[, grid]);
    bad_flag is detached from differentiation.
    """
    x, v, C, J = state4
    rod_base, rod_axis, rod_vel, rod_active, eta_scale, step_idx = xs
    dt = dyn["dt"]
    dx = dyn["dx"]
    inv_dx = 1.0 / dx
    n_p = x.shape[0]
    dims = geom["dims_static"]
    M = dims[0] * dims[1] * dims[2]
    stride = jnp.array([dims[1] * dims[2], dims[2], 1])
    visc = viscosity_fn(kind)

    # constitutive stress from start-of-step state
    eps = 0.5 * (C + jnp.swapaxes(C, 1, 2))
    s2 = 2.0 * jnp.sum(eps * eps, axis=(1, 2))
    pos_mask = s2 > 0.0
    gamma = jnp.where(pos_mask, jnp.sqrt(jnp.where(pos_mask, s2, 1.0)), 0.0)
    eta = visc(gamma, theta) * eta_scale
    tau_v = 0.5 * dyn["kappa"] * (J - 1.0 / J)
    sig = tau_v[:, None, None] * jnp.eye(3) + eta[:, None, None] * eps

    # P2G with quadratic B-spline weights
    Xg = (x - geom["lo"]) * inv_dx
    base = jnp.floor(Xg - 0.5).astype(jnp.int32)
    oob = (base < 0) | (base > jnp.array(dims) - 3)
    base = jnp.clip(base, 0, jnp.array(dims) - 3)
    fx = Xg - base
    w = jnp.stack(
        [0.5 * (1.5 - fx) ** 2, 0.75 - (fx - 1.0) ** 2, 0.5 * (fx - 0.5) ** 2], axis=1
    )
    offs = jnp.array(_OFFSETS)
    wt = w[:, offs[:, 0], 0] * w[:, offs[:, 1], 1] * w[:, offs[:, 2], 2]
    dpos = (offs[None, :, :] - fx[:, None, :]) * dx
    lin = jnp.sum((base[:, None, :] + offs[None, :, :]) * stride, axis=-1)

    mass = dyn["p_mass"]
    vol0 = dyn["p_vol0"]
    affine = (-dt * 4.0 * inv_dx * inv_dx) * (vol0 * J)[:, None, None] * sig + mass[:, None, None] * C
    mom = wt[:, :, None] * (mass[:, None, None] * v[:, None, :] + jnp.einsum("nab,nkb->nka", affine, dpos))
    grid_m = jnp.zeros(M).at[lin.reshape(-1)].add((wt * mass[:, None]).reshape(-1))
    grid_mom = jnp.zeros((M, 3)).at[lin.reshape(-1)].add(mom.reshape(-1, 3))

    # grid update: momentum -> velocity, gravity, walls, rod
    has = grid_m > 0.0
    vg = jnp.where(has[:, None], grid_mom / jnp.maximum(grid_m, 1e-300)[:, None], 0.0)
    vg = vg + dt * dyn["gravity"] * has[:, None]

    if has_container:
        rr = geom["wall_rr"]
        rhat = geom["wall_rhat"]
        vrad = jnp.sum(vg * rhat, axis=-1)
        wall = (rr >= dyn["wall_radius"]) & (vrad > 0.0) & has
        vg = vg - jnp.where(wall[:, None], vrad[:, None] * rhat, 0.0)
        floor = (geom["node_pos"][:, 1] <= dyn["floor_y"]) & (vg[:, 1] < 0.0) & has
        vg = vg.at[:, 1].set(jnp.where(floor, 0.0, vg[:, 1]))

    d = geom["node_pos"] - rod_base
    s_ax = jnp.sum(d * rod_axis, axis=-1)
    rad_vec = d - s_ax[:, None] * rod_axis
    radial = jnp.sqrt(jnp.maximum(jnp.sum(rad_vec * rad_vec, axis=-1), 1e-300))
    inrod = (
        (radial <= dyn["rod_radius"])
        & (s_ax >= 0.0)
        & (s_ax <= dyn["rod_length"])
        & has
        & (rod_active > 0.0)
    )
    v_pre = vg
    vg = jnp.where(inrod[:, None], rod_vel[None, :], vg)
    f_impulse = -jnp.sum(
        jnp.where(inrod[:, None], grid_m[:, None] * (vg - v_pre) / dt, 0.0), axis=0
    )

    # G2P and advection
    gv = vg[lin]
    new_v = jnp.sum(wt[:, :, None] * gv, axis=1)
    new_C = (4.0 * inv_dx * inv_dx) * jnp.einsum("nk,nka,nkb->nab", wt, gv, dpos)
    new_x = x + dt * new_v
    jfac = 1.0 + dt * (new_C[:, 0, 0] + new_C[:, 1, 1] + new_C[:, 2, 2])
    new_J = jnp.maximum(J * jfac, 1e-9)

    f_stress = _shell_traction(
        x, sig, J, vol0, rod_base, rod_axis, rod_active,
        dyn["rod_radius"], dyn["rod_length"], dyn["shell"], dx,
    )

    bad = (
        jnp.any(oob)
        | (~jnp.all(jnp.isfinite(new_x)))
        | (~jnp.all(jnp.isfinite(new_v)))
        | (jnp.max(jnp.abs(new_v)) > dx / dt)
        | jnp.any(jfac <= 0.0)
    )
    bad = jax.lax.stop_gradient(bad)

    out = ((new_x, new_v, new_C, new_J), f_stress, f_impulse, bad)
    if return_grid:
        out = out + ((grid_m, grid_mom, vg, v_pre, inrod),)
    return out


def _shell_traction(x, sig, J, vol0, rod_base, rod_axis, rod_active,
                    rod_radius, rod_length, shell, dx):
    """Traction integral sum(w * sigma . n * A) over the rod contact shell.

    n is the outward radial direction from the rod axis at each particle and
    A = (V0*J)^(2/3).  The weight w tapers quadratically from 1 at the rod
    surface to 0 at the shell edge (and near the rod ends), which keeps the
    force differentiable as particles enter and leave the shell.
    """
    d = x - rod_base
    s_ax = jnp.sum(d * rod_axis, axis=-1)
    rad_vec = d - s_ax[:, None] * rod_axis
    radial = jnp.sqrt(jnp.maximum(jnp.sum(rad_vec * rad_vec, axis=-1), 1e-300))
    n_hat = rad_vec / radial[:, None]
    sd = jnp.abs(radial - rod_radius) / shell
    w_rad = jnp.clip(1.0 - sd, 0.0, 1.0) ** 2
    w_ax = jnp.clip(s_ax / (2.0 * dx), 0.0, 1.0) * jnp.clip((rod_length - s_ax) / (2.0 * dx), 0.0, 1.0)
    w = w_rad * w_ax * (rod_active > 0.0)
    area = (vol0 * J) ** (2.0 / 3.0)
    traction = jnp.einsum("nab,nb->na", sig, n_hat) * area[:, None]
    return jnp.sum(w[:, None] * traction, axis=0)


@lru_cache(maxsize=64)
def _compiled_step(n_particles, dims, kind, has_container):
    core = partial(_advance, kind=ModelKind(kind), has_container=has_container, return_grid=True)

    def run(state4, xs, theta, dyn, geom):
        geom = dict(geom, dims_static=dims)
        return core(state4, xs, theta, dyn, geom)

    return jax.jit(run)


@lru_cache(maxsize=64)
def _compiled_rollout(n_particles, dims, kind, has_container):
    core = partial(_advance, kind=ModelKind(kind), has_container=has_container)

    def run(state4, xs_all, theta, dyn, geom):
        geom = dict(geom, dims_static=dims)

        def body(carry, xs):
            s4, first_bad = carry
            s4, f_stress, f_imp, bad = core(s4, xs, theta, dyn, geom)
            first_bad = jnp.where(bad & (first_bad < 0), xs[5], first_bad)
            return (s4, first_bad), (f_stress, f_imp)

        (state4, first_bad), (f_stress, f_imp) = jax.lax.scan(
            body, (state4, jnp.int32(-1)), xs_all
        )
        return state4, first_bad, f_stress, f_imp

    return jax.jit(run)


# ---------------------------------------------------------------------------
# packing helpers shared with diffsim
# ---------------------------------------------------------------------------


def _dyn_params(scene: StirScene, config: SimConfig, model: FluidModel, state: ParticleSystem):
    return {
        "dt": jnp.float64(config.dt),
        "dx": jnp.float64(config.grid_dx),
        "kappa": jnp.float64(model.volumetric.kappa),
        "gravity": jnp.asarray(config.gravity, dtype=jnp.float64),
        "p_mass": jnp.asarray(state.mass),
        "p_vol0": jnp.asarray(state.rest_volume),
        "wall_radius": jnp.float64(scene.container.radius if scene.container else 0.0),
        "floor_y": jnp.float64(0.0),
        "rod_radius": jnp.float64(scene.rod.radius),
        "rod_length": jnp.float64(scene.rod.height),
        "shell": jnp.float64(config.shell_thickness),
    }


def _geom_arrays(geom: _GridGeom):
    return {
        "lo": jnp.asarray(geom.lo),
        "node_pos": jnp.asarray(geom.node_pos),
        "wall_rr": jnp.asarray(geom.wall_rr),
        "wall_rhat": jnp.asarray(geom.wall_rhat),
    }


def _state4_of(state: ParticleSystem):
    return (
        jnp.asarray(state.position),
        jnp.asarray(state.velocity),
        jnp.asarray(state.affine),
        jnp.asarray(state.J),
    )


def _state_of(state4, template: ParticleSystem) -> ParticleSystem:
    x, v, C, J = state4
    return ParticleSystem(
        position=np.asarray(x),
        velocity=np.asarray(v),
        affine=np.asarray(C),
        J=np.asarray(J),
        mass=template.mass,
        rest_volume=template.rest_volume,
    )


def _rod_xs(scene: StirScene, config: SimConfig, times, eta_scale=None):
    """Per-step rod pose arrays; inactive rod when no trajectory is set."""
    times = np.asarray(times, dtype=float)
    n = len(times)
    if scene.trajectory is None:
        base = np.zeros((n, 3))
        axis = np.tile([0.0, 1.0, 0.0], (n, 1))
        vel = np.zeros((n, 3))
        active = np.zeros(n)
    else:
        if n and times[-1] > scene.trajectory.t_end + 1e-12:
            raise ValueError(
                f"trajectory span {scene.trajectory.t_end:.4f}s does not cover "
                f"rollout end {times[-1]:.4f}s"
            )
        base, axis, vel = scene.trajectory.sample(times)
        active = np.ones(n)
    if eta_scale is None:
        eta_scale = np.ones(n)
    else:
        eta_scale = np.asarray(eta_scale, dtype=float)
        if eta_scale.shape != (n,):
            raise ValueError("eta_scale must have one entry per frame")
    return (
        jnp.asarray(base),
        jnp.asarray(axis),
        jnp.asarray(vel),
        jnp.asarray(active),
        jnp.asarray(eta_scale),
        jnp.arange(n, dtype=jnp.int32),
    )


def _horizontal(config: SimConfig):
    return jnp.asarray(config.horizontal_axis, dtype=jnp.float64)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def step(
    state: ParticleSystem,
    model: FluidModel,
    scene: StirScene,
    config: SimConfig,
    t: float,
):
    """Advance one time step; returns (new_state, grid, force_vector).

    The force vector is the shell traction integral (fluid-on-rod) for this
    step.  The returned GridField holds the post-boundary grid so the
    impulse estimator can be evaluated on it.
    """
    geom = _grid_geometry(scene, config)
    fn = _compiled_step(state.count, geom.dims, model.kind.value, scene.container is not None)
    xs = tuple(a[0] for a in _rod_xs(scene, config, [t]))
    theta = jnp.asarray(param_vector(model))
    state4, f_stress, _f_imp, bad, grid_raw = fn(
        _state4_of(state), xs, theta, _dyn_params(scene, config, model, state), _geom_arrays(geom)
    )
    new_state = _state_of(state4, state)
    if bool(bad):
        raise SimulationUnstableError(0)
    grid_m, grid_mom, vg, v_pre, rod_mask = (np.asarray(a) for a in grid_raw)
    grid = GridField(
        dims=geom.dims,
        origin=geom.lo,
        dx=config.grid_dx,
        mass=grid_m,
        momentum=grid_mom,
        velocity=vg,
        velocity_pre_rod=v_pre,
        rod_mask=rod_mask.astype(bool),
    )
    return new_state, grid, np.asarray(f_stress)


def rollout(
    scene: StirScene,
    model: FluidModel,
    config: SimConfig,
    rng_seed: int = 0,
    initial_state: ParticleSystem | None = None,
    record_impulse: bool = False,
    eta_scale=None,
    start_time: float = 0.0,
) -> RolloutResult:
    """Run frame_count steps and record the horizontal rod-force trace.

    The trace uses the shell traction estimator; pass record_impulse=True to
    also collect the grid-impulse estimator.  Raises SimulationUnstableError
    (with the failing frame) instead of emitting non-finite samples.
    """
    state = initial_state if initial_state is not None else seed_particles(scene, config, rng_seed)
    n = config.frame_count
    if n == 0:
        return RolloutResult(
            trace=ForceTrace(dt_sample=config.dt, values=np.zeros(0), provenance="calculated"),
            final_state=state.copy(),
            impulse_trace=ForceTrace(dt_sample=config.dt, values=np.zeros(0), provenance="calculated")
            if record_impulse
            else None,
        )
    geom = _grid_geometry(scene, config)
    fn = _compiled_rollout(state.count, geom.dims, model.kind.value, scene.container is not None)
    times = start_time + np.arange(n) * config.dt
    xs_all = _rod_xs(scene, config, times, eta_scale)
    theta = jnp.asarray(param_vector(model))
    state4, first_bad, f_stress, f_imp = fn(
        _state4_of(state), xs_all, theta, _dyn_params(scene, config, model, state), _geom_arrays(geom)
    )
    first_bad = int(first_bad)
    if first_bad >= 0:
        raise SimulationUnstableError(first_bad)
    axis = np.asarray(config.horizontal_axis)
    trace = ForceTrace(dt_sample=config.dt, values=np.asarray(f_stress) @ axis, provenance="calculated")
    impulse = None
    if record_impulse:
        impulse = ForceTrace(dt_sample=config.dt, values=np.asarray(f_imp) @ axis, provenance="calculated")
    return RolloutResult(trace=trace, final_state=_state_of(state4, state), impulse_trace=impulse)


def settle(
    scene: StirScene,
    config: SimConfig,
    steps: int,
    rng_seed: int = 0,
    model: FluidModel | None = None,
) -> ParticleSystem:
    """Let freshly seeded fluid relax under gravity with the rod absent."""
    from .constitutive import ConstantViscosityParams, VolumetricLaw

    if model is None:
        model = FluidModel(
            kind=ModelKind.CONSTANT_VISCOSITY,
            params=ConstantViscosityParams(eta=0.05),
            volumetric=VolumetricLaw(kappa=5e4),
        )
    quiet = scene.with_trajectory(None)
    cfg = dataclasses.replace(config, frame_count=steps)
    return rollout(quiet, model, cfg, rng_seed=rng_seed).final_state


def rod_force_stress_integral(
    state: ParticleSystem,
    model: FluidModel,
    scene: StirScene,
    config: SimConfig,
    t: float,
) -> float:
    """Shell traction estimate of the horizontal fluid-on-rod force at time t.

    Sums sigma . n * A over particles within the contact shell (tapered
    weight; support |radial - rod_radius| < shell thickness), with n the
    outward radial normal from the rod axis and A = (V0*J)^(2/3).  Returns
    the component along config.horizontal_axis; 0 when the shell is empty.
    """
    if scene.trajectory is None:
        return 0.0
    base, axis, _vel = scene.trajectory.sample([t])
    C = jnp.asarray(state.affine)
    eps = 0.5 * (C + jnp.swapaxes(C, 1, 2))
    s2 = 2.0 * jnp.sum(eps * eps, axis=(1, 2))
    pos_mask = s2 > 0.0
    gamma = jnp.where(pos_mask, jnp.sqrt(jnp.where(pos_mask, s2, 1.0)), 0.0)
    eta = viscosity_fn(model.kind)(gamma, jnp.asarray(param_vector(model)))
    J = jnp.asarray(state.J)
    tau_v = 0.5 * model.volumetric.kappa * (J - 1.0 / J)
    sig = tau_v[:, None, None] * jnp.eye(3) + eta[:, None, None] * eps
    f = _shell_traction(
        jnp.asarray(state.position), sig, J, jnp.asarray(state.rest_volume),
        jnp.asarray(base[0]), jnp.asarray(axis[0]), jnp.float64(1.0),
        scene.rod.radius, scene.rod.height, config.shell_thickness, config.grid_dx,
    )
    return float(np.asarray(f) @ np.asarray(config.horizontal_axis))


def rod_force_grid_impulse(grid: GridField, scene: StirScene, config: SimConfig) -> float:
    """Grid-impulse estimate of the horizontal fluid-on-rod force.

    The rod constraint changes node momenta by m*(v_set - v_pre) per step;
    the momentum rate imparted to the fluid is sum(m*(v_set - v_pre))/dt and
    the reaction on the rod is its negation, reported here along the
    horizontal axis.  Returns 0 when no nodes are rod-constrained.
    """
    dv = grid.velocity - grid.velocity_pre_rod
    f = -np.sum(grid.mass[grid.rod_mask, None] * dv[grid.rod_mask], axis=0) / config.dt
    if not np.any(grid.rod_mask):
        return 0.0
    return float(f @ np.asarray(config.horizontal_axis))
