"""Low-Mach sweep harness.

Runs the compressible system for a decreasing list of eps from well-prepared
data, runs the incompressible reference once from the unperturbed preset,
evaluates the error norms of the limit estimates at shared sample times, and
fits log-log convergence rates.  Also hosts the acoustic dispersion probe.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .constitutive import Constitutive, ModelKind
from .dynamics import (
    CompressibleState,
    IncompressibleState,
    PRESETS,
    initial_from_preset,
    primitives,
    well_prepared_initial,
)
from .errors import NumericsError
from .spectral import Field, TorusGrid, VectorField, hs_norm, l2_norm
from .stepper import (
    StepperConfig,
    acoustic_dt,
    integrate,
    phase_dt,
    step_compressible_rk4,
)
from .diagnostics import modulated_energy

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class SweepConfig:
    model: ModelKind = ModelKind.CH
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    n: int = 64
    dim: int = 2
    t_end: float = 0.5
    sample_times: Optional[tuple] = None
    s_index: int = 3
    initial: str = "taylor_green_bubble"
    kappa0: float = 0.1
    seed: int = 0
    cfl: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        if not self.eps_list or any(e <= 0 for e in self.eps_list):
            raise ValueError("eps_list must be nonempty and positive")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if self.dim != 2:
            raise ValueError("the sweep compares against a 2-d incompressible reference")
        if self.t_end <= 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.sample_times is not None:
            st = tuple(float(t) for t in self.sample_times)
            object.__setattr__(self, "sample_times", st)
            if any(t < 0 or t > self.t_end + 1e-12 for t in st):
                raise ValueError("sample_times must lie in [0, t_end]")
            if any(b <= a for a, b in zip(st, st[1:])):
                raise ValueError("sample_times must be strictly increasing")
        if self.s_index < 1:
            raise ValueError(f"s_index must be >= 1, got {self.s_index}")
        if 3 * self.s_index > self.n:
            raise ValueError(
                f"s_index {self.s_index} is not resolvable at n = {self.n}"
            )
        if self.initial not in PRESETS:
            raise ValueError(
                f"unknown preset {self.initial!r}; available: {sorted(PRESETS)}"
            )
        if self.kappa0 < 0:
            raise ValueError(f"kappa0 must be nonnegative, got {self.kappa0}")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.model is ModelKind.AC and self.s_index < 3:
            # err_grad_rho uses the s-2 norm in the relaxational model
            raise ValueError("the relaxational model needs s_index >= 3")

    def samples(self) -> tuple:
        if self.sample_times is not None:
            return self.sample_times
        return tuple(float(t) for t in np.linspace(0.0, self.t_end, 11))


@dataclass(frozen=True)
class EpsRecord:
    """Per-eps sup-in-time squared errors against the incompressible reference."""

    eps: float
    failed: bool = False
    reason: str = ""
    err_u: float = math.nan
    err_phi: float = math.nan
    err_combined: float = math.nan
    err_rho: float = math.nan
    err_grad_rho: float = math.nan
    err_time_integrated: float = math.nan
    distance_trace: tuple = ()
    full_trace: tuple = ()


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    sample_times: tuple
    records: tuple
    slopes: dict = field(default_factory=dict)


_ERROR_FAMILIES = (
    "err_u",
    "err_phi",
    "err_combined",
    "err_rho",
    "err_grad_rho",
    "err_time_integrated",
)


def fit_rate(points) -> tuple:
    """Least-squares fit of log err vs log eps; returns (slope, intercept, r2)."""
    pts = [(float(e), float(r)) for e, r in points]
    if len(pts) < 2:
        raise ValueError(f"rate fit needs at least 2 points, got {len(pts)}")
    if any(e <= 0 for e, _ in pts):
        raise ValueError("rate fit requires positive eps values")
    if any(r <= 0 for _, r in pts):
        raise ValueError(
            "rate fit requires positive errors; a zero error usually means the "
            "two solutions coincide to rounding"
        )
    x = np.log([e for e, _ in pts])
    y = np.log([r for _, r in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _reference_stepper_config(cfg: SweepConfig) -> StepperConfig:
    return StepperConfig(scheme="rk4", cfl=cfg.cfl, t_end=cfg.t_end)


def _run_compressible_leg(cfg: SweepConfig, c: Constitutive, eps: float, samples):
    """Integrate one compressible leg; module-level so sweeps can fork workers."""
    g = TorusGrid(cfg.dim, cfg.n)
    u0, phi0 = initial_from_preset(cfg.initial, g)
    state = well_prepared_initial(u0, phi0, eps, cfg.kappa0, cfg.seed, cfg.model)
    return integrate(state, c, _reference_stepper_config(cfg), samples)


def _eval_record(cfg, c, eps, comp_traj, ref_traj, samples) -> EpsRecord:
    s = cfg.s_index
    phi_idx = 1 if cfg.model is ModelKind.CH else 2
    grad_idx = s if cfg.model is ModelKind.CH else s - 2

    sup_u = sup_phi = sup_comb = sup_rho = sup_grad = 0.0
    integrand = []
    dist_trace = []
    full_trace = []
    for (_, cs), (_, ris) in zip(comp_traj, ref_traj):
        g = cs.grid
        ue, phie = primitives(cs)
        du2 = sum(l2_norm(a - b) ** 2 for a, b in zip(ue, ris.u))
        dphi = phie - ris.phi
        dphi2 = hs_norm(dphi, phi_idx) ** 2
        dens = Field(g, cs.rho.values - 1.0)
        drho2 = hs_norm(dens, s) ** 2
        dh = dens.spectral().data
        dgrad2 = sum(
            hs_norm(Field(g, g.ifft(g.deriv_hat(dh, a)), "physical"), grad_idx) ** 2
            for a in range(g.dim)
        )
        sup_u = max(sup_u, du2)
        sup_phi = max(sup_phi, dphi2)
        sup_comb = max(sup_comb, du2 + dphi2)
        sup_rho = max(sup_rho, drho2)
        sup_grad = max(sup_grad, dgrad2)
        integrand.append(
            sum(hs_norm(a - b, 1) ** 2 for a, b in zip(ue, ris.u))
            + hs_norm(dphi, 3) ** 2
        )
        full, dist = modulated_energy(cs, ris, c)
        dist_trace.append(dist)
        full_trace.append(full)

    err_int = float(_trapezoid(np.asarray(integrand), np.asarray(samples)))
    return EpsRecord(
        eps=eps,
        err_u=sup_u,
        err_phi=sup_phi,
        err_combined=sup_comb,
        err_rho=sup_rho,
        err_grad_rho=sup_grad,
        err_time_integrated=err_int,
        distance_trace=tuple(dist_trace),
        full_trace=tuple(full_trace),
    )


def run_sweep(cfg: SweepConfig, c: Constitutive, parallel: int = 1) -> SweepResult:
    """Run the eps sweep against one shared incompressible reference.

    A leg that aborts (vacuum, blow-up) is recorded as failed with its reason
    and excluded from the rate fits.  Deterministic for a fixed config seed.
    """
    samples = cfg.samples()
    g = TorusGrid(cfg.dim, cfg.n)
    u0, phi0 = initial_from_preset(cfg.initial, g)
    ref = integrate(
        IncompressibleState(u0, phi0, cfg.model), c, _reference_stepper_config(cfg), samples
    )

    legs = []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            futs = [
                ex.submit(_run_compressible_leg, cfg, c, eps, samples)
                for eps in cfg.eps_list
            ]
            for fut in futs:
                try:
                    legs.append(fut.result())
                except NumericsError as exc:
                    legs.append(exc)
    else:
        for eps in cfg.eps_list:
            try:
                legs.append(_run_compressible_leg(cfg, c, eps, samples))
            except NumericsError as exc:
                legs.append(exc)

    records = []
    for eps, leg in zip(cfg.eps_list, legs):
        if isinstance(leg, Exception):
            records.append(EpsRecord(eps=eps, failed=True, reason=str(leg)))
        else:
            records.append(_eval_record(cfg, c, eps, leg, ref, samples))

    slopes = {}
    for family in _ERROR_FAMILIES:
        pts = [
            (r.eps, getattr(r, family))
            for r in records
            if not r.failed and getattr(r, family) > 0
        ]
        if len(pts) >= 2:
            slopes[family] = fit_rate(pts)
    return SweepResult(cfg, tuple(samples), tuple(records), slopes)


def with_eps_list(cfg: SweepConfig, eps_list) -> SweepConfig:
    return replace(cfg, eps_list=tuple(eps_list))


# ---------------------------------------------------------------------------
# acoustic dispersion probe


def acoustic_dispersion_check(
    eps: float,
    k: int,
    amplitude: float,
    c: Constitutive,
    n: int = 64,
    cfl: float = 0.4,
    n_periods: float = 3.5,
) -> tuple:
    """Measure the oscillation frequency of one small density mode.

    Starts from rho = 1 + amplitude*cos(kx), u = 0, phi = 1 in 1-d, tracks
    Re(rho_hat_k) under the compressible dynamics, and times its zero
    crossings.  Returns (measured_freq, predicted_freq) with the prediction
    |k| sqrt(P'(1)) / eps from the linearized acoustic system.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    g = TorusGrid(1, n)
    if k > g.dealias_cutoff:
        raise ValueError(f"mode {k} exceeds the dealiased band of n = {n}")
    if amplitude <= 0 or amplitude > 1e-3 * eps**2:
        raise ValueError(
            f"amplitude must lie in (0, 1e-3*eps^2]; got {amplitude} at eps = {eps}"
        )

    x = g.coords()[0]
    rho = Field(g, 1.0 + amplitude * np.cos(k * x))
    state = CompressibleState(
        eps,
        rho,
        VectorField((Field(g, np.zeros(g.shape)),)),
        Field(g, rho.values.copy()),
        ModelKind.CH,
    )

    predicted = k * math.sqrt(float(c.pressure_prime(1.0))) / eps
    t_end = n_periods * 2.0 * math.pi / predicted
    # the conserved-phase chemistry remainder caps the stable step below the
    # acoustic scale at moderate eps, so apply both bounds
    dt = min(acoustic_dt(eps, g, c, cfl, 0.0), phase_dt(g, cfl))
    steps = max(1, math.ceil(t_end / dt))
    dt = t_end / steps

    signal = [float(np.real(g.fft(state.rho.values)[k]))]
    times = [0.0]
    for i in range(steps):
        state = step_compressible_rk4(state, dt, c)
        signal.append(float(np.real(g.fft(state.rho.values)[k])))
        times.append((i + 1) * dt)

    crossings = []
    for (t0, s0), (t1, s1) in zip(zip(times, signal), zip(times[1:], signal[1:])):
        if s0 == 0.0:
            crossings.append(t0)
        elif s0 * s1 < 0:
            crossings.append(t0 - s0 * (t1 - t0) / (s1 - s0))
    if len(crossings) < 3:
        raise NumericsError(
            f"horizon too short: found {len(crossings)} zero crossings, need >= 3"
        )
    spacings = np.diff(crossings)
    measured = math.pi / float(np.mean(spacings))
    return measured, predicted
