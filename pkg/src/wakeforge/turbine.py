"""Turbine definitions: rotor geometry plus tabulated power and thrust curves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TurbineSpec:
    """Rotor geometry and performance tables.

    Power and thrust coefficient are tabulated against wind speed and
    interpolated linearly. Power is forced to zero outside
    ``[cut_in, cut_out]``; the thrust curve is clamped to its end values
    outside the table, so it stays non-increasing in wind speed.
    """

    name: str
    rotor_diameter: float
    hub_height: float
    wind_speeds: tuple[float, ...]
    power_w: tuple[float, ...]
    ct: tuple[float, ...]
    cut_in: float
    cut_out: float
    rated_power: float
    _ws: np.ndarray = field(init=False, repr=False, compare=False)
    _pw: np.ndarray = field(init=False, repr=False, compare=False)
    _ct: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ws = np.asarray(self.wind_speeds, dtype=float)
        pw = np.asarray(self.power_w, dtype=float)
        ct = np.asarray(self.ct, dtype=float)
        if not (ws.shape == pw.shape == ct.shape) or ws.ndim != 1 or ws.size < 2:
            raise ValueError("wind_speeds, power_w and ct must be 1-D tables of equal length")
        if np.any(np.diff(ws) <= 0):
            raise ValueError("wind_speeds must be strictly increasing")
        if np.any(ct < 0) or np.any(ct >= 1):
            raise ValueError("thrust coefficients must lie in [0, 1)")
        if np.any(pw < 0):
            raise ValueError("power table must be non-negative")
        if self.rotor_diameter <= 0 or self.cut_in >= self.cut_out:
            raise ValueError("invalid rotor diameter or cut-in/cut-out speeds")
        rising = pw[(ws >= self.cut_in) & (pw < self.rated_power)]
        if np.any(np.diff(rising) < 0):
            raise ValueError("power curve must be non-decreasing up to rated power")
        object.__setattr__(self, "_ws", ws)
        object.__setattr__(self, "_pw", pw)
        object.__setattr__(self, "_ct", ct)

    @property
    def d0(self) -> float:
        return self.rotor_diameter

    def power(self, u):
        """Electrical power (W) at hub wind speed ``u`` (scalar or array)."""
        u = np.asarray(u, dtype=float)
        p = np.interp(u, self._ws, self._pw)
        return np.where((u < self.cut_in) | (u > self.cut_out), 0.0, p)

    def ct_at(self, u):
        """Thrust coefficient at hub wind speed ``u``."""
        return np.interp(np.asarray(u, dtype=float), self._ws, self._ct)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rotor_diameter": self.rotor_diameter,
            "hub_height": self.hub_height,
            "wind_speeds": list(self.wind_speeds),
            "power_w": list(self.power_w),
            "ct": list(self.ct),
            "cut_in": self.cut_in,
            "cut_out": self.cut_out,
            "rated_power": self.rated_power,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurbineSpec":
        return cls(
            name=d.get("name", "inline"),
            rotor_diameter=float(d["rotor_diameter"]),
            hub_height=float(d["hub_height"]),
            wind_speeds=tuple(float(v) for v in d["wind_speeds"]),
            power_w=tuple(float(v) for v in d["power_w"]),
            ct=tuple(float(v) for v in d["ct"]),
            cut_in=float(d["cut_in"]),
            cut_out=float(d["cut_out"]),
            rated_power=float(d["rated_power"]),
        )


def _v80_tables():
    ws = np.round(np.arange(4.0, 25.0 + 1e-9, 0.5), 10)
    cut_in, rated_ws, rated = 4.0, 15.0, 2.0e6
    # cubic rise from cut-in to rated speed, flat above
    pw = np.where(ws >= rated_ws, rated,
                  rated * (ws**3 - cut_in**3) / (rated_ws**3 - cut_in**3))
    # 0.8 plateau up to 10 m/s, linear taper to 0.1 at cut-out
    ct = np.where(ws <= 10.0, 0.8, 0.8 - 0.7 * (ws - 10.0) / 15.0)
    return tuple(ws.tolist()), tuple(pw.tolist()), tuple(np.round(ct, 12).tolist())


def v80() -> TurbineSpec:
    """Vestas-V80-like 2 MW turbine (toolkit constants, not manufacturer data)."""
    ws, pw, ct = _v80_tables()
    return TurbineSpec(
        name="v80",
        rotor_diameter=80.0,
        hub_height=70.0,
        wind_speeds=ws,
        power_w=pw,
        ct=ct,
        cut_in=4.0,
        cut_out=25.0,
        rated_power=2.0e6,
    )


V80 = v80()

TURBINES = {"v80": V80}


def get_turbine(spec) -> TurbineSpec:
    """Resolve a turbine given by name (``"v80"``) or an inline dict."""
    if isinstance(spec, TurbineSpec):
        return spec
    if isinstance(spec, str):
        try:
            return TURBINES[spec.lower()]
        except KeyError:
            raise ValueError(f"unknown turbine {spec!r}; known: {sorted(TURBINES)}") from None
    return TurbineSpec.from_dict(spec)
