"""Scenario, result, graph and wake-field file formats."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .schemas import validate
from .turbine import V80, get_turbine
from .wake import FarmScenario, FlowConditions, SimulationResult


def scenario_from_dict(d: dict) -> FarmScenario:
    validate("scenario", d)
    positions = np.asarray(d["positions"], dtype=float)
    yaw = d.get("yaw")
    if yaw is None:
        yaw = np.zeros(len(positions))
    cond = FlowConditions(float(d["wind_speed"]), float(d["wind_direction"]), float(d["ti"]))
    return FarmScenario(positions, yaw, cond, get_turbine(d.get("turbine", "v80")))


def scenario_to_dict(s: FarmScenario) -> dict:
    c = s.conditions
    return {
        "positions": s.positions.tolist(),
        "yaw": s.yaw.tolist(),
        "wind_speed": c.wind_speed,
        "wind_direction": c.wind_direction,
        "ti": c.turbulence_intensity,
        "turbine": s.spec.name if s.spec == V80 else s.spec.to_dict(),
    }


def load_scenario(path) -> FarmScenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def save_scenario(path, s: FarmScenario) -> None:
    d = scenario_to_dict(s)
    validate("scenario", d)
    Path(path).write_text(json.dumps(d, indent=2) + "\n")


def result_to_dict(r: SimulationResult) -> dict:
    d = {"uw": r.effective_speeds.tolist(), "power_w": r.powers.tolist(), "total_w": r.total_power}
    validate("result", d)
    return d


def field_to_csv(points, uw) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "uw"])
    for (x, y), u in zip(np.asarray(points), np.asarray(uw)):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(u))])
    return buf.getvalue()


def write_json(path, obj, schema: str | None = None) -> None:
    if schema:
        validate(schema, obj)
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        print(text, end="")
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
