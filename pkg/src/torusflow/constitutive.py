"""Constitutive laws: barotropic pressure, double well, viscosities.

The pressure is the power law p_e(rho) = a * rho**gamma.  Its elastic
potential omega satisfies rho * omega'(rho) - omega(rho) = p_e(rho) with
omega(1) = 0 (so omega'(1) = p_e(1)); energy comparisons downstream use
the relative form omega(rho) - p_e(1) * (rho - 1), which is nonnegative
by convexity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .spectral import Field, dealias, laplacian, to_physical, to_spectral


class ModelKind(enum.Enum):
    """Phase dynamics: conserved (CH) or relaxational (AC)."""

    CH = "nsch"
    AC = "nsac"


def double_well(phi):
    """G(phi) = (phi^2 - 1)^2 / 4."""
    p = np.asarray(phi, dtype=float) if not isinstance(phi, Field) else phi.values
    return 0.25 * (p * p - 1.0) ** 2


def double_well_prime(phi):
    """G'(phi) = phi^3 - phi."""
    p = np.asarray(phi, dtype=float) if not isinstance(phi, Field) else phi.values
    return p**3 - p


@dataclass(frozen=True)
class Constitutive:
    """Material parameters.

    Viscosities are either constant or affine in (rho - 1, phi^2), clamped
    pointwise to [*_star, *_upper] so they stay positive.
    """

    gamma: float = 2.0
    pressure_coeff: float = 1.0
    visc_kind: str = "constant"  # "constant" | "affine"
    nu0: float = 0.1
    nu_rho: float = 0.0
    nu_phi: float = 0.0
    eta0: float = 0.1
    eta_rho: float = 0.0
    eta_phi: float = 0.0
    nu_star: float = 1e-4
    nu_upper: float = 100.0
    eta_star: float = 1e-4
    eta_upper: float = 100.0

    def __post_init__(self):
        if self.gamma < 1.0:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.pressure_coeff <= 0.0:
            raise ValueError(f"pressure_coeff must be positive, got {self.pressure_coeff}")
        if self.visc_kind not in ("constant", "affine"):
            raise ValueError(f"visc_kind must be 'constant' or 'affine', got {self.visc_kind!r}")
        for lo, hi, name in (
            (self.nu_star, self.nu_upper, "nu"),
            (self.eta_star, self.eta_upper, "eta"),
        ):
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} clamp bounds must satisfy 0 < lower <= upper")
        if not (self.nu_star <= self.nu0 <= self.nu_upper):
            raise ValueError("nu0 must lie inside its clamp bounds")
        if not (self.eta_star <= self.eta0 <= self.eta_upper):
            raise ValueError("eta0 must lie inside its clamp bounds")

    # -- pressure family -------------------------------------------------

    def pressure(self, rho):
        r, wrap = _unwrap(rho)
        return wrap(self.pressure_coeff * r**self.gamma)

    def pressure_prime(self, rho):
        r, wrap = _unwrap(rho)
        return wrap(self.pressure_coeff * self.gamma * r ** (self.gamma - 1.0))

    def omega(self, rho):
        """Elastic potential: a*rho*(rho^(g-1) - 1)/(g-1), a*rho*log(rho) at g=1."""
        r, wrap = _unwrap(rho)
        a, g = self.pressure_coeff, self.gamma
        if abs(g - 1.0) < 1e-12:
            return wrap(a * r * np.log(r))
        return wrap(a * (r * (r ** (g - 1.0) - 1.0) / (g - 1.0)))

    # -- viscosities ------------------------------------------------------

    def viscosity_nu(self, rho, phi):
        r, wrap = _unwrap(rho)
        p, _ = _unwrap(phi)
        if self.visc_kind == "constant":
            return wrap(np.full_like(np.asarray(r, dtype=float), self.nu0))
        raw = self.nu0 + self.nu_rho * (r - 1.0) + self.nu_phi * p * p
        return wrap(np.clip(raw, self.nu_star, self.nu_upper))

    def viscosity_eta(self, rho, phi):
        r, wrap = _unwrap(rho)
        p, _ = _unwrap(phi)
        if self.visc_kind == "constant":
            return wrap(np.full_like(np.asarray(r, dtype=float), self.eta0))
        raw = self.eta0 + self.eta_rho * (r - 1.0) + self.eta_phi * p * p
        return wrap(np.clip(raw, self.eta_star, self.eta_upper))


def chemical_potential(rho: Field, phi: Field) -> Field:
    """mu = (-Lap phi) / rho + phi^3 - phi, with spectral Lap and dealiased cube."""
    g = phi.grid
    rvals = rho.values
    if np.min(rvals) <= 0.0:
        raise ValueError("chemical_potential requires a vacuum-free density")
    lap = laplacian(phi.physical()).data
    cube = to_physical(dealias(to_spectral(Field(g, phi.values**3)))).data
    vals = -lap / rvals + cube - phi.values
    return Field(g, vals)


def _unwrap(x):
    """Accept Field or array-like; return (values, rewrapper)."""
    if isinstance(x, Field):
        grid = x.grid
        return x.values, lambda v: Field(grid, np.asarray(v, dtype=float))
    arr = np.asarray(x, dtype=float)
    return arr, lambda v: v
