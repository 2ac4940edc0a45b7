"""Constitutive laws for weakly compressible non-Newtonian fluids.

The fluid stress is assembled from an isotropic volumetric part driven by
the per-particle volume ratio J and a rate-dependent viscous part:

    sigma = tau_v(J) * I + eta(gamma_dot) * strain_rate

with tau_v from a neo-Hookean volumetric energy and eta(gamma_dot) the
apparent viscosity of the selected model (Carreau, Cross, regularized
Herschel-Bulkley, or plain constant viscosity).

All quantities are strict SI (Pa, Pa*s, s, 1/s).  The math kernels are
written with jax.numpy so the same formulas run inside the differentiable
simulator; the public functions accept ordinary floats or arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import jax.numpy as jnp
import numpy as np

__all__ = [
    "ModelKind",
    "CarreauParams",
    "CrossParams",
    "HerschelBulkleyParams",
    "ConstantViscosityParams",
    "KelvinVoigt1D",
    "VolumetricLaw",
    "FluidModel",
    "kv_stress_1d",
    "volumetric_energy",
    "volumetric_stress",
    "apparent_viscosity",
    "shear_rate_magnitude",
    "total_stress",
    "model_param_gradients",
    "param_vector",
    "with_param_vector",
    "param_names",
    "param_bounds",
    "project_params",
]

#: shear-rate floor for the Herschel-Bulkley power term (1/s)
HB_RATE_FLOOR = 1e-6
#: smallest admissible viscosity-like parameter during optimization (Pa*s)
ETA_FLOOR = 1e-6


class ModelKind(str, enum.Enum):
    CARREAU = "carreau"
    CROSS = "cross"
    HERSCHEL_BULKLEY = "herschel_bulkley"
    CONSTANT_VISCOSITY = "constant_viscosity"


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class CarreauParams:
    """Carreau apparent-viscosity parameters (eta0, eta_inf in Pa*s, lam in s)."""

    eta0: float
    eta_inf: float
    lam: float
    n: float

    def __post_init__(self):
        _check(self.eta0 >= 0, "eta0 must be >= 0")
        _check(self.eta_inf >= 0, "eta_inf must be >= 0")
        _check(self.lam >= 0, "lam must be >= 0")
        _check(np.isfinite(self.n), "n must be finite")


@dataclass(frozen=True)
class CrossParams:
    """Cross apparent-viscosity parameters (eta0, eta_inf in Pa*s, lam in s)."""

    eta0: float
    eta_inf: float
    lam: float
    n: float

    def __post_init__(self):
        _check(self.eta0 >= 0, "eta0 must be >= 0")
        _check(self.eta_inf >= 0, "eta_inf must be >= 0")
        _check(self.lam >= 0, "lam must be >= 0")


@dataclass(frozen=True)
class HerschelBulkleyParams:
    """Herschel-Bulkley parameters with Papanastasiou-style regularization.

    tau_y is the yield stress (Pa), k the consistency index (Pa*s^n), n the
    power-law index.  m_reg (s) is an implementation smoothing constant: the
    singular yield term tau_y/gamma_dot is replaced by
    tau_y * (1 - exp(-m_reg*gamma_dot)) / gamma_dot, which is finite and
    differentiable down to gamma_dot = 0.
    """

    tau_y: float
    k: float
    n: float
    m_reg: float = 100.0

    def __post_init__(self):
        _check(self.tau_y >= 0, "tau_y must be >= 0")
        _check(self.k >= 0, "k must be >= 0")
        _check(self.n > 0, "n must be > 0")
        _check(self.m_reg > 0, "m_reg must be > 0")


@dataclass(frozen=True)
class ConstantViscosityParams:
    """Newtonian limit: a single viscosity eta (Pa*s)."""

    eta: float

    def __post_init__(self):
        _check(self.eta >= 0, "eta must be >= 0")


@dataclass(frozen=True)
class KelvinVoigt1D:
    """Linear 1D spring-dashpot pair: sigma = E*strain + eta*strain_rate."""

    E: float
    eta: float

    def __post_init__(self):
        _check(self.E >= 0, "E must be >= 0")
        _check(self.eta >= 0, "eta must be >= 0")


@dataclass(frozen=True)
class VolumetricLaw:
    """Neo-Hookean volumetric response with bulk modulus kappa (Pa)."""

    kappa: float

    def __post_init__(self):
        _check(self.kappa > 0, "kappa must be > 0")


_PARAMS_FOR_KIND = {
    ModelKind.CARREAU: CarreauParams,
    ModelKind.CROSS: CrossParams,
    ModelKind.HERSCHEL_BULKLEY: HerschelBulkleyParams,
    ModelKind.CONSTANT_VISCOSITY: ConstantViscosityParams,
}


@dataclass(frozen=True)
class FluidModel:
    """A constitutive model: viscosity law selection plus volumetric stiffness."""

    kind: ModelKind
    params: object
    volumetric: VolumetricLaw

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        expected = _PARAMS_FOR_KIND[kind]
        _check(
            isinstance(self.params, expected),
            f"params for {kind.value} must be {expected.__name__}",
        )


# ---------------------------------------------------------------------------
# closed-form scalar laws
# ---------------------------------------------------------------------------


def kv_stress_1d(model: KelvinVoigt1D, strain, strain_rate):
    """Linear Kelvin-Voigt stress, sigma = E*eps + eta*eps_dot."""
    return model.E * strain + model.eta * strain_rate


def volumetric_energy(law: VolumetricLaw, J):
    """Volumetric energy density W_v(J) = kappa/2 * (1/2*(J^2 - 1) - ln J).

    Nonnegative, with its minimum W_v(1) = 0 at the undeformed state.
    """
    J = jnp.asarray(J)
    if np.any(np.asarray(J) <= 0):
        raise ValueError("volume ratio J must be > 0")
    return 0.5 * law.kappa * (0.5 * (J**2 - 1.0) - jnp.log(J))


def volumetric_stress(law: VolumetricLaw, J):
    """Scalar volumetric stress tau_v = dW_v/dJ = kappa/2 * (J - 1/J)."""
    J = jnp.asarray(J)
    if np.any(np.asarray(J) <= 0):
        raise ValueError("volume ratio J must be > 0")
    return 0.5 * law.kappa * (J - 1.0 / J)


# ---------------------------------------------------------------------------
# apparent viscosity kernels (jit/grad-safe, raw parameters)
# ---------------------------------------------------------------------------


def carreau_viscosity(gamma_dot, eta0, eta_inf, lam, n):
    """Carreau law: eta = eta_inf + (eta0 - eta_inf)*(1 + (lam*g)^2)^((n-1)/2)."""
    s = 1.0 + (lam * gamma_dot) ** 2
    return eta_inf + (eta0 - eta_inf) * s ** ((n - 1.0) / 2.0)


def cross_viscosity(gamma_dot, eta0, eta_inf, lam, n):
    """Cross law: eta = eta_inf + (eta0 - eta_inf) / (1 + (lam*g)^n).

    The power is guarded at lam*g = 0 so gradients stay finite there (the
    zero-shear limit is eta0 for any n > 0).
    """
    lg = lam * gamma_dot
    pos = lg > 0.0
    u = jnp.where(pos, jnp.where(pos, lg, 1.0) ** n, 0.0)
    return eta_inf + (eta0 - eta_inf) / (1.0 + u)


def herschel_bulkley_viscosity(gamma_dot, tau_y, k, n, m_reg=100.0):
    """Regularized Herschel-Bulkley apparent viscosity.

    eta = k * max(g, floor)^(n-1) + tau_y * (1 - exp(-m_reg*g)) / g

    The yield term tends to tau_y*m_reg as g -> 0 and is evaluated through
    a series branch below g = 1e-12 to keep that limit exact.
    """
    gp = jnp.maximum(gamma_dot, HB_RATE_FLOOR)
    power_term = k * gp ** (n - 1.0)
    tiny = gamma_dot < 1e-12
    g_safe = jnp.where(tiny, 1.0, gamma_dot)
    yield_term = jnp.where(
        tiny,
        tau_y * m_reg * (1.0 - 0.5 * m_reg * gamma_dot),
        tau_y * (-jnp.expm1(-m_reg * g_safe)) / g_safe,
    )
    return power_term + yield_term


def viscosity_fn(kind: ModelKind):
    """Viscosity kernel for a model kind as f(gamma_dot, theta_vector)."""
    kind = ModelKind(kind)
    if kind == ModelKind.CARREAU:
        return lambda g, th: carreau_viscosity(g, th[0], th[1], th[2], th[3])
    if kind == ModelKind.CROSS:
        return lambda g, th: cross_viscosity(g, th[0], th[1], th[2], th[3])
    if kind == ModelKind.HERSCHEL_BULKLEY:
        return lambda g, th, m=100.0: herschel_bulkley_viscosity(g, th[0], th[1], th[2], m)
    return lambda g, th: th[0] * jnp.ones_like(jnp.asarray(g, dtype=jnp.float64))


def apparent_viscosity(model: FluidModel, gamma_dot):
    """Apparent viscosity eta(gamma_dot) of the model, in Pa*s.

    gamma_dot may be a scalar or array of nonnegative shear rates.
    """
    g = np.asarray(gamma_dot, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma_dot must be >= 0")
    p = model.params
    if model.kind == ModelKind.CARREAU:
        return carreau_viscosity(g, p.eta0, p.eta_inf, p.lam, p.n)
    if model.kind == ModelKind.CROSS:
        return cross_viscosity(g, p.eta0, p.eta_inf, p.lam, p.n)
    if model.kind == ModelKind.HERSCHEL_BULKLEY:
        return herschel_bulkley_viscosity(g, p.tau_y, p.k, p.n, p.m_reg)
    return p.eta * jnp.ones_like(jnp.asarray(g))


def shear_rate_magnitude(strain_rate):
    """Scalar shear rate from a symmetric strain-rate tensor.

    Second-invariant convention: gamma_dot = sqrt(2 * sum_ij eps_ij^2).
    Zero exactly when the tensor is zero; invariant under rotations.
    Accepts a single (3, 3) tensor or a batch (..., 3, 3).
    """
    eps = jnp.asarray(strain_rate)
    s2 = 2.0 * jnp.sum(eps * eps, axis=(-2, -1))
    pos = s2 > 0.0
    return jnp.where(pos, jnp.sqrt(jnp.where(pos, s2, 1.0)), 0.0)


def total_stress(model: FluidModel, J, strain_rate):
    """Total Cauchy stress sigma = tau_v(J)*I + eta(gamma_dot)*strain_rate.

    The strain-rate tensor is symmetrized before use, so the result is
    exactly symmetric.  Returns a (3, 3) tensor (or batch thereof).
    """
    if np.any(np.asarray(J) <= 0):
        raise ValueError("volume ratio J must be > 0")
    eps = jnp.asarray(strain_rate, dtype=jnp.float64)
    eps = 0.5 * (eps + jnp.swapaxes(eps, -2, -1))
    gd = shear_rate_magnitude(eps)
    eta = apparent_viscosity(model, np.asarray(gd))
    tau_v = volumetric_stress(model.volumetric, J)
    eye = jnp.eye(3)
    tau_v = jnp.asarray(tau_v)
    eta = jnp.asarray(eta)
    return tau_v[..., None, None] * eye + eta[..., None, None] * eps


# ---------------------------------------------------------------------------
# parameter vectors, bounds, analytic gradients
# ---------------------------------------------------------------------------

_PARAM_NAMES = {
    ModelKind.CARREAU: ("eta0", "eta_inf", "lam", "n"),
    ModelKind.CROSS: ("eta0", "eta_inf", "lam", "n"),
    ModelKind.HERSCHEL_BULKLEY: ("tau_y", "k", "n"),
    ModelKind.CONSTANT_VISCOSITY: ("eta",),
}

# optimization domain per parameter; used by gd_update's projection
_PARAM_BOUNDS = {
    ModelKind.CARREAU: ((ETA_FLOOR, 1e5), (ETA_FLOOR, 1e5), (ETA_FLOOR, 1e4), (0.05, 3.0)),
    ModelKind.CROSS: ((ETA_FLOOR, 1e5), (ETA_FLOOR, 1e5), (ETA_FLOOR, 1e4), (1e-3, 4.0)),
    ModelKind.HERSCHEL_BULKLEY: ((0.0, 1e5), (ETA_FLOOR, 1e5), (0.05, 3.0)),
    ModelKind.CONSTANT_VISCOSITY: ((ETA_FLOOR, 1e5),),
}


def param_names(kind: ModelKind) -> tuple:
    return _PARAM_NAMES[ModelKind(kind)]


def param_bounds(kind: ModelKind) -> tuple:
    return _PARAM_BOUNDS[ModelKind(kind)]


def param_vector(model: FluidModel) -> np.ndarray:
    """Fitted-parameter vector of the model (excludes kappa and m_reg)."""
    return np.array([getattr(model.params, f) for f in param_names(model.kind)], dtype=float)


def with_param_vector(model: FluidModel, theta) -> FluidModel:
    """Copy of the model with its fitted parameters replaced by theta."""
    theta = np.asarray(theta, dtype=float)
    names = param_names(model.kind)
    if theta.shape != (len(names),):
        raise ValueError(f"theta must have shape ({len(names)},) for {model.kind.value}")
    updates = {name: float(v) for name, v in zip(names, theta)}
    return replace(model, params=replace(model.params, **updates))


def project_params(kind: ModelKind, theta) -> np.ndarray:
    """Clamp a parameter vector onto its valid domain."""
    bounds = param_bounds(kind)
    theta = np.asarray(theta, dtype=float)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(theta, lo, hi)


def model_param_gradients(model: FluidModel, gamma_dot) -> np.ndarray:
    """Analytic gradient of apparent_viscosity w.r.t. each fitted parameter.

    Returns d(eta)/d(theta_i) evaluated at gamma_dot, ordered as
    param_names(model.kind).
    """
    g = float(gamma_dot)
    if g < 0:
        raise ValueError("gamma_dot must be >= 0")
    p = model.params
    if model.kind == ModelKind.CARREAU:
        s = 1.0 + (p.lam * g) ** 2
        sp = s ** ((p.n - 1.0) / 2.0)
        d_eta0 = sp
        d_eta_inf = 1.0 - sp
        d_lam = (p.eta0 - p.eta_inf) * (p.n - 1.0) * p.lam * g**2 * s ** ((p.n - 3.0) / 2.0)
        d_n = (p.eta0 - p.eta_inf) * sp * 0.5 * np.log(s)
        return np.array([d_eta0, d_eta_inf, d_lam, d_n])
    if model.kind == ModelKind.CROSS:
        lg = p.lam * g
        if lg > 0:
            u = lg**p.n
            denom = (1.0 + u) ** 2
            d_eta0 = 1.0 / (1.0 + u)
            d_eta_inf = u / (1.0 + u)
            d_lam = -(p.eta0 - p.eta_inf) * (p.n * u / p.lam) / denom
            d_n = -(p.eta0 - p.eta_inf) * u * np.log(lg) / denom
        else:
            d_eta0, d_eta_inf, d_lam, d_n = 1.0, 0.0, 0.0, 0.0
        return np.array([d_eta0, d_eta_inf, d_lam, d_n])
    if model.kind == ModelKind.HERSCHEL_BULKLEY:
        gp = max(g, HB_RATE_FLOOR)
        d_k = gp ** (p.n - 1.0)
        d_n = p.k * gp ** (p.n - 1.0) * np.log(gp)
        if g < 1e-12:
            d_tau = p.m_reg
        else:
            d_tau = -np.expm1(-p.m_reg * g) / g
        return np.array([d_tau, d_k, d_n])
    return np.array([1.0])
