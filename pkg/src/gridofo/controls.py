"""Governor, exciter, power system stabilizer and AGC as discrete blocks.

Every block is realized from first-order stages (one scalar state per pole)
advanced with the trapezoidal rule, inputs frozen over the step. Limited
stages use clamping anti-windup: the limited state itself is clipped, so it
does not wind up while the output saturates.

All step functions are pure: they take a state, return (new_state, output),
and broadcast over machine fleets when the parameters are arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import GridDataError


def _trapz_lag(x, u, T, dt):
    """One trapezoidal step of x' = (u - x)/T with u frozen over the step."""
    k = dt / (2.0 * T)
    return ((1.0 - k) * x + 2.0 * k * u) / (1.0 + k)


def _leadlag_out(x, u, T_num, T_den):
    """Output of (1 + s*T_num)/(1 + s*T_den) realized as lag state + feedthrough."""
    c = T_num / T_den
    return c * u + (1.0 - c) * x


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GovernorParams:
    T_1: float
    T_2: float
    T_3: float
    R_g: float
    D_t: float = 0.0
    V_min: float = 0.0
    V_max: float = 15.0

    def __post_init__(self):
        if self.T_1 <= 0 or self.T_3 <= 0:
            raise GridDataError("governor: T_1 and T_3 must be > 0")
        if self.R_g <= 0:
            raise GridDataError("governor: droop R_g must be > 0")
        if not self.V_min < self.V_max:
            raise GridDataError("governor: V_min must be below V_max")


@dataclass(frozen=True)
class ExciterParams:
    K_ex: float
    T_a: float
    T_b: float
    T_e: float
    E_min: float = 0.0
    E_max: float = 8.0

    def __post_init__(self):
        if self.T_b <= 0 or self.T_e <= 0:
            raise GridDataError("exciter: T_b and T_e must be > 0")
        if self.K_ex <= 0:
            raise GridDataError("exciter: K_ex must be > 0")
        if not self.E_min < self.E_max:
            raise GridDataError("exciter: E_min must be below E_max")


@dataclass(frozen=True)
class PssParams:
    K_PSS: float
    T: float
    T_1: float
    T_2: float
    T_3: float
    T_4: float
    H_lim: float

    def __post_init__(self):
        if self.T <= 0 or self.T_3 <= 0 or self.T_4 <= 0:
            raise GridDataError("pss: T, T_3 and T_4 must be > 0")
        if self.H_lim <= 0:
            raise GridDataError("pss: H_lim must be > 0")


@dataclass(frozen=True)
class AgcParams:
    lam: float
    K_p: float
    K_i: float
    beta: tuple[float, ...]

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if np.any(b < 0):
            raise GridDataError("agc: participation factors must be >= 0")
        if abs(b.sum() - 1.0) > 1e-12:
            raise GridDataError("agc: participation factors must sum to 1")


class _ParamSet:
    """Stacks per-machine parameter dataclasses into attribute arrays."""

    cls = None

    def __init__(self, params: Sequence):
        self.params = tuple(params)
        self.n = len(self.params)
        for f in fields(self.cls):
            setattr(self, f.name, np.array([getattr(p, f.name) for p in self.params]))


class GovernorSet(_ParamSet):
    cls = GovernorParams


class ExciterSet(_ParamSet):
    cls = ExciterParams


class PssSet(_ParamSet):
    cls = PssParams


# ---------------------------------------------------------------------------
# Governor: droop -> limited valve lag -> turbine lead-lag, minus D_t path
# ---------------------------------------------------------------------------

@dataclass
class GovernorState:
    x_valve: np.ndarray
    x_turb: np.ndarray


def governor_init(p, p_m0) -> GovernorState:
    x = np.clip(np.asarray(p_m0, dtype=float), p.V_min, p.V_max)
    return GovernorState(x_valve=x.copy(), x_turb=x.copy())


def governor_step(p, s: GovernorState, delta_omega, p_m0, dt):
    u = p_m0 - delta_omega / p.R_g
    x_valve = np.clip(_trapz_lag(s.x_valve, u, p.T_1, dt), p.V_min, p.V_max)
    x_turb = _trapz_lag(s.x_turb, x_valve, p.T_3, dt)
    out = _leadlag_out(x_turb, x_valve, p.T_2, p.T_3) - p.D_t * delta_omega
    return GovernorState(x_valve, x_turb), out


# ---------------------------------------------------------------------------
# Exciter: (1+sTa)/(1+sTb) then limited K_ex/(1+sTe)
# ---------------------------------------------------------------------------

@dataclass
class ExciterState:
    x_ll: np.ndarray
    x_out: np.ndarray


def exciter_init(p, E_f0) -> ExciterState:
    e0 = np.asarray(E_f0, dtype=float) / p.K_ex
    return ExciterState(x_ll=e0.copy(), x_out=np.clip(E_f0, p.E_min, p.E_max))


def exciter_step(p, s: ExciterState, delta_v, v_pss, E_f0, dt):
    u = E_f0 / p.K_ex + delta_v + v_pss
    x_ll = _trapz_lag(s.x_ll, u, p.T_b, dt)
    mid = _leadlag_out(x_ll, u, p.T_a, p.T_b)
    x_out = np.clip(_trapz_lag(s.x_out, p.K_ex * mid, p.T_e, dt), p.E_min, p.E_max)
    return ExciterState(x_ll, x_out), x_out


# ---------------------------------------------------------------------------
# PSS: washout s*K/(1+sT), two lead-lags, output clip
# ---------------------------------------------------------------------------

@dataclass
class PssState:
    x_w: np.ndarray
    x_1: np.ndarray
    x_2: np.ndarray


def pss_init(p, n: int) -> PssState:
    z = np.zeros(n)
    return PssState(z.copy(), z.copy(), z.copy())


def pss_step(p, s: PssState, delta_omega, dt):
    x_w = _trapz_lag(s.x_w, delta_omega, p.T, dt)
    w_out = p.K_PSS * (delta_omega - x_w) / p.T
    x_1 = _trapz_lag(s.x_1, w_out, p.T_3, dt)
    o_1 = _leadlag_out(x_1, w_out, p.T_1, p.T_3)
    x_2 = _trapz_lag(s.x_2, o_1, p.T_4, dt)
    out = np.clip(_leadlag_out(x_2, o_1, p.T_2, p.T_4), -p.H_lim, p.H_lim)
    return PssState(x_w, x_1, x_2), out


# ---------------------------------------------------------------------------
# AGC: -lambda gain, PI, participation distribution
# ---------------------------------------------------------------------------

@dataclass
class AgcState:
    x_i: float = 0.0


def average_frequency(delta_omegas, H, S) -> float:
    """Inertia-weighted mean speed deviation over the fleet."""
    dw = np.asarray(delta_omegas, dtype=float)
    w = np.asarray(H, dtype=float) * np.asarray(S, dtype=float)
    if dw.size == 0 or len(dw) != len(w):
        raise GridDataError("average_frequency: empty or mismatched machine set")
    total = w.sum()
    if total <= 0:
        raise GridDataError("average_frequency: total H*S must be positive")
    return float(np.dot(dw, w) / total)


def agc_step(p: AgcParams, s: AgcState, avg_delta_omega: float, dt: float):
    e = -p.lam * avg_delta_omega
    x_i = s.x_i + dt * p.K_i * e  # pure integrator; trapezoid == Euler for frozen input
    out = p.K_p * e + x_i
    return AgcState(x_i), np.asarray(p.beta) * out
