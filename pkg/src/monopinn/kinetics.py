"""Aliev-Panfilov point kinetics and the implicit single-cell integrator.

The two-variable model evolves a normalized action potential ``phi`` and a
recovery variable ``r`` in normalized time ``tau``:

    d(phi)/d(tau) = c*phi*(phi - alpha)*(1 - phi) - r*phi + I
    d(r)/d(tau)   = [gamma + mu1*r/(mu2 + phi)] * [-r - c*phi*(phi - b - 1)]

Physical units (mV, ms) map onto the normalized variables through the
scalars in :class:`NormalizationScalars`.  Time stepping is backward Euler
with a staggered Newton scheme: per step a local Newton solve first
advances ``r`` from its committed history at the start-of-step potential,
then an outer scalar Newton iteration solves for ``phi`` with the new
recovery value frozen.  All functions are pure; state lives in the values
passed around.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError, SingularityError

_DENOM_FLOOR = 1e-12
_JACOBIAN_FLOOR = 1e-14


@dataclass(frozen=True)
class APParameters:
    """Material constants of the kinetic model (all dimensionless)."""

    alpha: float
    b: float
    c: float
    gamma: float
    mu1: float
    mu2: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.c <= 0.0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.mu2 <= 0.0:
            raise ValueError(f"mu2 must be positive, got {self.mu2}")


@dataclass(frozen=True)
class NormalizationScalars:
    """Unit-conversion scalars between (Phi [mV], t [ms]) and (phi, tau)."""

    beta_phi: float
    delta_phi: float
    beta_t: float

    def __post_init__(self):
        if self.beta_phi <= 0.0:
            raise ValueError(f"beta_phi must be positive, got {self.beta_phi}")
        if self.beta_t <= 0.0:
            raise ValueError(f"beta_t must be positive, got {self.beta_t}")


#: Preset for the Aliev-Panfilov variant (ventricular myocardium).
AP_SCALARS = NormalizationScalars(beta_phi=100.0, delta_phi=80.0, beta_t=12.9)
#: Preset for the FitzHugh-Nagumo variant.
FHN_SCALARS = NormalizationScalars(beta_phi=65.0, delta_phi=35.0, beta_t=220.0)


@dataclass(frozen=True)
class CellState:
    """Normalized potential and recovery value of a single cell."""

    phi: float
    r: float


@dataclass(frozen=True)
class StimulusProtocol:
    """External stimulus description.

    ``time_unit`` declares whether ``t_stim`` and ``half_width`` are given in
    normalized time units or in ms; there is no implicit conversion, the
    caller must evaluate the protocol on the matching time axis.
    ``spatial_support`` optionally restricts the stimulus to an axis-aligned
    box ``((x0, x1), (y0, y1), (z0, z1))`` in mm (3-D use only).
    """

    amplitude: float
    t_stim: float
    half_width: float
    shape: str = "square"
    time_unit: str = "normalized"
    spatial_support: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError("stimulus amplitude must be >= 0")
        if self.half_width <= 0.0:
            raise ValueError("stimulus half_width must be > 0")
        if self.shape not in ("square", "exponential"):
            raise ValueError(f"unknown stimulus shape {self.shape!r}")
        if self.time_unit not in ("normalized", "ms"):
            raise ValueError(f"unknown stimulus time unit {self.time_unit!r}")


@dataclass(frozen=True)
class LocalNewtonConfig:
    """Tolerance and iteration budget for the local recovery-variable solve."""

    tol: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def f_phi(state: CellState, params: APParameters, stim=0.0):
    """Rate of the normalized potential, including the external stimulus."""
    phi, r = state.phi, state.r
    return params.c * phi * (phi - params.alpha) * (1.0 - phi) - r * phi + stim


def f_r(state: CellState, params: APParameters):
    """Rate of the recovery variable."""
    phi, r = state.phi, state.r
    denom = params.mu2 + phi
    if np.any(np.abs(denom) < _DENOM_FLOOR):
        raise SingularityError(f"mu2 + phi = {denom} is numerically singular")
    return (params.gamma + params.mu1 * r / denom) * (
        -r - params.c * phi * (phi - params.b - 1.0)
    )


def df_phi_dphi(phi, r, params: APParameters):
    """d(f_phi)/d(phi) at fixed recovery value."""
    a = params.alpha
    return params.c * (-3.0 * phi * phi + 2.0 * (1.0 + a) * phi - a) - r


def normalize_potential(phi_mv, scalars: NormalizationScalars):
    """Map physical potential [mV] to the dimensionless variable."""
    return (phi_mv + scalars.delta_phi) / scalars.beta_phi


def denormalize_potential(phi, scalars: NormalizationScalars):
    """Inverse of :func:`normalize_potential`."""
    return phi * scalars.beta_phi - scalars.delta_phi


def normalize_time(t_ms, scalars: NormalizationScalars):
    """Map physical time [ms] to normalized time units."""
    return t_ms / scalars.beta_t


def denormalize_time(tau, scalars: NormalizationScalars):
    """Inverse of :func:`normalize_time`."""
    return tau * scalars.beta_t


def source_term_physical(state: CellState, params: APParameters, stim,
                         scalars: NormalizationScalars):
    """Unit-corrected source term in mV/ms."""
    return scalars.beta_phi / scalars.beta_t * f_phi(state, params, stim)


def stimulus_value(t, protocol: StimulusProtocol):
    """Stimulus amplitude at time ``t`` (scalar or array).

    ``t`` must be expressed in the protocol's own time unit.  The square
    shape is the full amplitude inside the closed window
    ``[t_stim - half_width, t_stim + half_width]`` and zero outside; the
    exponential shape is the bump ``A * exp(-(k*(t - t_stim))**2)`` with
    ``k = 4.1 / (2 * half_width)``, which keeps the same nominal width while
    staying differentiable in both ``t`` and ``t_stim``.
    """
    t = np.asarray(t, dtype=float)
    if protocol.shape == "square":
        inside = np.abs(t - protocol.t_stim) <= protocol.half_width
        value = np.where(inside, protocol.amplitude, 0.0)
    else:
        k = 4.1 / (2.0 * protocol.half_width)
        arg = k * (t - protocol.t_stim)
        value = protocol.amplitude * np.exp(-(arg * arg))
    return value if value.ndim else float(value)


class LocalNewtonResult(NamedTuple):
    r: float
    f_phi: float
    df_phi_dphi: float


def _r_residual(r, r_n, phi, dtau, params: APParameters):
    state = CellState(phi=phi, r=r)
    return r - r_n - f_r(state, params) * dtau


def _r_residual_derivative(r, phi, dtau, params: APParameters):
    denom = params.mu2 + phi
    inner = 2.0 * r + params.c * phi * (phi - params.b - 1.0)
    return 1.0 + (params.gamma + params.mu1 / denom * inner) * dtau


def local_newton_r(phi: float, r_n: float, dtau: float, params: APParameters,
                   cfg: LocalNewtonConfig = LocalNewtonConfig()) -> LocalNewtonResult:
    """Advance the recovery variable one backward-Euler step at fixed ``phi``.

    Solves ``R(r) = r - r_n - f_r(phi, r)*dtau = 0`` by Newton iteration
    started from the history value, then evaluates ``f_phi`` and its
    ``phi``-derivative at the converged pair, which is what the outer
    potential solve consumes.
    """
    if dtau < 0.0:
        raise ValueError("dtau must be >= 0")
    r = r_n
    residual = _r_residual(r, r_n, phi, dtau, params)
    converged = abs(residual) < cfg.tol
    for _ in range(cfg.max_iter):
        if converged:
            break
        slope = _r_residual_derivative(r, phi, dtau, params)
        if abs(slope) < _JACOBIAN_FLOOR:
            raise SingularityError(
                f"local Newton Jacobian {slope} is numerically singular")
        r = r - residual / slope
        residual = _r_residual(r, r_n, phi, dtau, params)
        converged = abs(residual) < cfg.tol
    if not converged:
        raise ConvergenceError(
            f"local Newton for r did not converge in {cfg.max_iter} iterations "
            f"(|R|={abs(residual):.3e}, tol={cfg.tol:.1e})")
    state = CellState(phi=phi, r=r)
    return LocalNewtonResult(r=r, f_phi=f_phi(state, params),
                             df_phi_dphi=df_phi_dphi(phi, r, params))


def local_newton_r_many(phi, r_n, dtau, params: APParameters,
                        cfg: LocalNewtonConfig = LocalNewtonConfig()):
    """Vectorized :func:`local_newton_r` over arrays of points.

    Performs the identical iteration per entry (converged entries are frozen,
    so each entry sees the same update sequence as the scalar routine) and
    returns ``(r, f_phi, df_phi_dphi)`` arrays.  The stimulus is not applied
    here; callers add it to ``f_phi`` where needed.
    """
    if dtau < 0.0:
        raise ValueError("dtau must be >= 0")
    phi = np.asarray(phi, dtype=float)
    r = np.array(r_n, dtype=float, copy=True)
    r_hist = np.asarray(r_n, dtype=float)

    denom = params.mu2 + phi
    if np.any(np.abs(denom) < _DENOM_FLOOR):
        raise SingularityError("mu2 + phi is numerically singular at a point")

    def residual_of(r_cur):
        rate = (params.gamma + params.mu1 * r_cur / denom) * (
            -r_cur - params.c * phi * (phi - params.b - 1.0))
        return r_cur - r_hist - rate * dtau

    residual = residual_of(r)
    active = np.abs(residual) >= cfg.tol
    for _ in range(cfg.max_iter):
        if not active.any():
            break
        inner = 2.0 * r + params.c * phi * (phi - params.b - 1.0)
        slope = 1.0 + (params.gamma + params.mu1 / denom * inner) * dtau
        if np.any(np.abs(slope[active]) < _JACOBIAN_FLOOR):
            raise SingularityError("local Newton Jacobian is singular at a point")
        r = np.where(active, r - residual / np.where(active, slope, 1.0), r)
        residual = np.where(active, residual_of(r), residual)
        active = np.abs(residual) >= cfg.tol
    if active.any():
        worst = float(np.max(np.abs(residual)))
        raise ConvergenceError(
            f"local Newton for r did not converge at {int(active.sum())} points "
            f"(max |R|={worst:.3e}, tol={cfg.tol:.1e})")
    fphi = params.c * phi * (phi - params.alpha) * (1.0 - phi) - r * phi
    dfdphi = df_phi_dphi(phi, r, params)
    return r, fphi, dfdphi


@dataclass(frozen=True)
class CellTrajectory:
    """Time series of a single-cell integration (arrays of equal length)."""

    tau: np.ndarray
    phi: np.ndarray
    r: np.ndarray

    def __len__(self):
        return self.tau.shape[0]

    def to_csv(self, path, scalars: Optional[NormalizationScalars] = None):
        """Write `tau,phi,r` rows; adds `t_ms,Phi_mV` when scalars are given."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if scalars is None:
                writer.writerow(["tau", "phi", "r"])
                for k in range(len(self)):
                    writer.writerow([repr(float(self.tau[k])), repr(float(self.phi[k])),
                                     repr(float(self.r[k]))])
            else:
                writer.writerow(["tau", "phi", "r", "t_ms", "Phi_mV"])
                for k in range(len(self)):
                    t_ms = float(denormalize_time(self.tau[k], scalars))
                    phi_mv = float(denormalize_potential(self.phi[k], scalars))
                    writer.writerow([repr(float(self.tau[k])), repr(float(self.phi[k])),
                                     repr(float(self.r[k])), repr(t_ms), repr(phi_mv)])


def integrate_cell(params: APParameters, scalars: NormalizationScalars,
                   ic: CellState, protocol: Optional[StimulusProtocol],
                   dtau: float, n_steps: int,
                   cfg: LocalNewtonConfig = LocalNewtonConfig(),
                   outer_tol: float = 1e-10, outer_max_iter: int = 50) -> CellTrajectory:
    """Integrate the cell model with backward Euler over ``n_steps`` steps.

    Every step is staggered the way the local-iteration scheme prescribes:
    first the recovery variable is advanced from its committed history at
    the start-of-step potential, ``r_new = r_n + dtau*f_r(phi_n, r_new)``,
    solved by :func:`local_newton_r`; then the outer Newton iteration solves
    ``phi - phi_n - dtau*f_phi(phi, r_new) = 0`` with the recovery value
    frozen, which makes the scalar Jacobian ``1 - dtau*df_phi/dphi`` exact.
    Both values are committed only after the outer iteration converged.  The
    stimulus is evaluated at the end-of-step time.  A protocol given in ms
    is evaluated on the physical time axis ``tau * beta_t``.
    """
    if dtau <= 0.0:
        raise ValueError("dtau must be > 0")
    tau = np.empty(n_steps + 1)
    phi = np.empty(n_steps + 1)
    rec = np.empty(n_steps + 1)
    tau[0], phi[0], rec[0] = 0.0, ic.phi, ic.r

    phi_n, r_n = ic.phi, ic.r
    for step in range(1, n_steps + 1):
        tau_new = step * dtau
        if protocol is None:
            stim = 0.0
        elif protocol.time_unit == "normalized":
            stim = float(stimulus_value(tau_new, protocol))
        else:
            stim = float(stimulus_value(denormalize_time(tau_new, scalars), protocol))

        local = local_newton_r(phi_n, r_n, dtau, params, cfg)
        r_new = local.r
        p = phi_n
        f_cur, df_cur = local.f_phi, local.df_phi_dphi
        residual = p - phi_n - dtau * (f_cur + stim)
        converged = abs(residual) < outer_tol
        for _ in range(outer_max_iter):
            if converged:
                break
            slope = 1.0 - dtau * df_cur
            if abs(slope) < _JACOBIAN_FLOOR:
                raise SingularityError("outer Newton Jacobian is numerically singular")
            p = p - residual / slope
            f_cur = f_phi(CellState(phi=p, r=r_new), params)
            df_cur = df_phi_dphi(p, r_new, params)
            residual = p - phi_n - dtau * (f_cur + stim)
            converged = abs(residual) < outer_tol
        if not converged:
            raise ConvergenceError(
                f"outer Newton on phi did not converge at step {step} "
                f"(tau={tau_new:.6g}, |R|={abs(residual):.3e})")

        phi_n, r_n = p, r_new
        tau[step], phi[step], rec[step] = tau_new, phi_n, r_n
    return CellTrajectory(tau=tau, phi=phi, r=rec)
