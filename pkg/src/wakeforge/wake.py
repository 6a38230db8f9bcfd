"""Analytical wake engine.

Gaussian velocity-deficit wakes (Bastankhah form) deflected laterally by the
Jiménez skew-angle model and combined by sum-of-squares superposition.
All angles at the interface are degrees. Positions are planar ``(east, north)``
metres; the wind direction is meteorological (the direction the wind blows
FROM, clockwise from north).

Internally every computation happens in the wind-aligned frame: ``x`` points
downstream and ``y`` is ``x`` rotated 90 degrees counter-clockwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .turbine import V80, TurbineSpec


class WakeDomainError(ValueError):
    """Raised when a wake kernel is evaluated outside its domain."""


@dataclass(frozen=True)
class FlowConditions:
    wind_speed: float
    wind_direction: float
    turbulence_intensity: float

    def __post_init__(self):
        if not self.wind_speed > 0:
            raise ValueError(f"wind_speed must be > 0, got {self.wind_speed}")
        if not 0.0 <= self.turbulence_intensity <= 1.0:
            raise ValueError(f"turbulence_intensity must be in [0, 1], got {self.turbulence_intensity}")
        object.__setattr__(self, "wind_speed", float(self.wind_speed))
        object.__setattr__(self, "wind_direction", float(self.wind_direction) % 360.0)
        object.__setattr__(self, "turbulence_intensity", float(self.turbulence_intensity))


@dataclass(frozen=True)
class WakeParams:
    """Wake-model constants.

    ``k`` is the wake growth rate, ``kd`` the Jiménez skew decay constant.
    When ``k_ti_slope`` is set the growth rate becomes ``k_ti_slope * TI``.
    """

    k: float = 0.0324555
    kd: float = 0.1
    rho: float = 1.225
    superposition: str = "sum_of_squares"
    yaw_power_exponent: float = 3.0
    k_ti_slope: float | None = None

    def __post_init__(self):
        if self.k <= 0 or self.kd <= 0 or self.rho <= 0:
            raise ValueError("k, kd and rho must be positive")
        if self.superposition != "sum_of_squares":
            raise ValueError(f"unsupported superposition {self.superposition!r}")
        if self.k_ti_slope is not None and self.k_ti_slope <= 0:
            raise ValueError("k_ti_slope must be positive when given")

    def growth_rate(self, ti: float) -> float:
        if self.k_ti_slope is None:
            return self.k
        return self.k_ti_slope * ti

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "kd": self.kd,
            "rho": self.rho,
            "superposition": self.superposition,
            "yaw_power_exponent": self.yaw_power_exponent,
            "k_ti_slope": self.k_ti_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WakeParams":
        return cls(**d)


@dataclass
class FarmScenario:
    positions: np.ndarray
    yaw: np.ndarray
    conditions: FlowConditions
    spec: TurbineSpec = V80

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.yaw = np.asarray(self.yaw, dtype=float).reshape(-1)
        if len(self.yaw) != len(self.positions):
            raise ValueError(
                f"yaw has {len(self.yaw)} entries but there are {len(self.positions)} turbines")

    @property
    def n_turbines(self) -> int:
        return len(self.positions)

    def with_yaw(self, yaw) -> "FarmScenario":
        return FarmScenario(self.positions, yaw, self.conditions, self.spec)

    def with_direction(self, wind_direction: float) -> "FarmScenario":
        c = self.conditions
        cond = FlowConditions(c.wind_speed, wind_direction, c.turbulence_intensity)
        return FarmScenario(self.positions, self.yaw, cond, self.spec)


@dataclass
class SimulationResult:
    effective_speeds: np.ndarray
    powers: np.ndarray
    total_power: float
    near_wake: bool = False
    ct: np.ndarray = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# frame conversion

def downwind_unit(wind_direction: float) -> np.ndarray:
    """Unit vector (east, north) the wind blows TOWARDS."""
    th = np.radians(wind_direction)
    return np.array([-np.sin(th), -np.cos(th)])


def to_wind_frame(positions, wind_direction: float):
    """Map ``(east, north)`` positions to ``(streamwise, spanwise)`` arrays."""
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    th = np.radians(wind_direction)
    s, c = np.sin(th), np.cos(th)
    x = -s * p[:, 0] - c * p[:, 1]
    y = c * p[:, 0] - s * p[:, 1]
    return x, y


def from_wind_frame(x, y, wind_direction: float) -> np.ndarray:
    """Inverse of :func:`to_wind_frame`; returns an ``(n, 2)`` position array."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    th = np.radians(wind_direction)
    s, c = np.sin(th), np.cos(th)
    east = -s * x + c * y
    north = -c * x - s * y
    return np.stack([east, north], axis=-1)


# ---------------------------------------------------------------------------
# kernels

def beta_of_ct(ct):
    """Wake expansion parameter ``0.5 (1 + sqrt(1-ct)) / sqrt(1-ct)``."""
    ct = np.asarray(ct, dtype=float)
    if np.any(ct < 0) or np.any(ct >= 1):
        raise WakeDomainError(f"thrust coefficient must lie in [0, 1), got {ct}")
    s = np.sqrt(1.0 - ct)
    out = 0.5 * (1.0 + s) / s
    return out[()] if out.ndim == 0 else out


def wake_sigma(x_down, ct, d0, k):
    """Standard deviation (m) of the Gaussian deficit at ``x_down`` metres."""
    x_down = np.asarray(x_down, dtype=float)
    if np.any(x_down < 0):
        raise WakeDomainError("x_down must be >= 0")
    return k * x_down + 0.2 * np.sqrt(beta_of_ct(ct)) * d0


def _deficit(x_down, r_cross, ct, d0, k):
    """Vectorised deficit; returns (deficit, near_wake_mask). No domain checks on ct."""
    x_down = np.asarray(x_down, dtype=float)
    ct = np.asarray(ct, dtype=float)
    downstream = x_down > 0
    xd = np.where(downstream, x_down, 0.0)
    s1 = np.sqrt(1.0 - ct)
    sigma = k * xd + 0.2 * np.sqrt(0.5 * (1.0 + s1) / s1) * d0
    arg = 1.0 - ct / (8.0 * (sigma / d0) ** 2)
    near = downstream & (arg < 0)
    amp = 1.0 - np.sqrt(np.maximum(arg, 0.0))
    g = np.exp(-np.asarray(r_cross, dtype=float) ** 2 / (2.0 * sigma**2))
    return np.where(downstream, amp * g, 0.0), near


def gaussian_deficit(x_down, r_cross, ct, d0, k):
    """Fractional velocity deficit ``dU / U_inf`` behind a rotor.

    ``r_cross`` is the cross-stream distance from the (deflected) wake
    centreline. Points at or upstream of the rotor (``x_down <= 0``) get zero.
    In the near wake, where the square root would turn imaginary, the
    amplitude saturates at 1.
    """
    ct_arr = np.asarray(ct, dtype=float)
    if np.any(ct_arr < 0) or np.any(ct_arr >= 1):
        raise WakeDomainError(f"thrust coefficient must lie in [0, 1), got {ct}")
    out, _ = _deficit(x_down, r_cross, ct_arr, d0, k)
    return out[()] if out.ndim == 0 else out


def jimenez_deflection(x_down, ct, gamma, d0, kd):
    """Lateral wake-centre offset (m) behind a rotor yawed by ``gamma`` degrees.

    Skew angle decays as ``a0 / (1 + kd s / d0)**2`` with
    ``a0 = 0.5 cos(g)**2 sin(g) ct``; integrating with tan(a) ~ a gives
    ``a0 x / (1 + kd x / d0)``.
    """
    x_down = np.asarray(x_down, dtype=float)
    if np.any(x_down < 0):
        raise WakeDomainError("x_down must be >= 0")
    return _deflection(x_down, ct, gamma, d0, kd)


def _deflection(x_down, ct, gamma, d0, kd):
    g = np.radians(gamma)
    a0 = 0.5 * np.cos(g) ** 2 * np.sin(g) * np.asarray(ct, dtype=float)
    xd = np.maximum(x_down, 0.0)
    return a0 * xd / (1.0 + kd * xd / d0)


# ---------------------------------------------------------------------------
# farm simulation

def _check_scenario(scenario: FarmScenario):
    if scenario.n_turbines == 0:
        raise ValueError("farm has no turbines")


def simulate_farm(scenario: FarmScenario, params: WakeParams | None = None) -> SimulationResult:
    """Effective wind speed and power at every turbine.

    Turbines are swept in downstream order so each wake generator's thrust
    coefficient is taken at its own (already waked) effective speed.
    """
    params = params or WakeParams()
    _check_scenario(scenario)
    spec = scenario.spec
    cond = scenario.conditions
    u_inf = cond.wind_speed
    d0 = spec.rotor_diameter
    k = params.growth_rate(cond.turbulence_intensity)

    x, y = to_wind_frame(scenario.positions, cond.wind_direction)
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs, ys, gs = x[order], y[order], scenario.yaw[order]

    uw = np.full(n, u_inf, dtype=float)
    ct = np.zeros(n)
    near_any = False
    for m in range(n):
        if m:
            dx = xs[m] - xs[:m]
            cti = ct[:m]
            offset = _deflection(dx, cti, gs[:m], d0, params.kd)
            r = ys[m] - (ys[:m] + offset)
            dfc, near = _deficit(dx, r, cti, d0, k)
            near_any = near_any or bool(near.any())
            delta = min(np.sqrt(np.sum(dfc * dfc)), 1.0)
            uw[m] = u_inf * (1.0 - delta)
        ct[m] = spec.ct_at(uw[m])

    eff = np.empty(n)
    eff[order] = uw
    cts = np.empty(n)
    cts[order] = ct
    powers = spec.power(eff) * np.cos(np.radians(scenario.yaw)) ** params.yaw_power_exponent
    powers = np.maximum(powers, 0.0)
    return SimulationResult(eff, powers, float(powers.sum()), near_any, cts)


def lattice(xmin: float, xmax: float, ymin: float, ymax: float, nx: int, ny: int) -> np.ndarray:
    """Rectangular grid of ``(east, north)`` points, row-major in north."""
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, nx), np.linspace(ymin, ymax, ny))
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def sample_wake_field(scenario: FarmScenario, params: WakeParams | None = None,
                      points=None, result: SimulationResult | None = None) -> np.ndarray:
    """Effective wind speed at arbitrary ``(east, north)`` points."""
    params = params or WakeParams()
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("grid must contain at least one point")
    result = result or simulate_farm(scenario, params)
    spec = scenario.spec
    cond = scenario.conditions
    d0 = spec.rotor_diameter
    k = params.growth_rate(cond.turbulence_intensity)

    x, y = to_wind_frame(scenario.positions, cond.wind_direction)
    order = np.argsort(x, kind="stable")
    xs, ys, gs, cts = x[order], y[order], scenario.yaw[order], result.ct[order]
    px, py = to_wind_frame(pts, cond.wind_direction)

    dx = px[:, None] - xs[None, :]
    offset = _deflection(dx, cts[None, :], gs[None, :], d0, params.kd)
    r = py[:, None] - (ys[None, :] + offset)
    dfc, _ = _deficit(dx, r, cts[None, :], d0, k)
    delta = np.minimum(np.sqrt(np.sum(dfc * dfc, axis=1)), 1.0)
    return cond.wind_speed * (1.0 - delta)


def make_scenario(positions: Sequence, yaw=None, wind_speed: float = 10.0,
                  wind_direction: float = 270.0, ti: float = 0.05,
                  spec: TurbineSpec = V80) -> FarmScenario:
    """Convenience constructor with zero yaw by default."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if yaw is None:
        yaw = np.zeros(len(positions))
    return FarmScenario(positions, yaw, FlowConditions(wind_speed, wind_direction, ti), spec)
