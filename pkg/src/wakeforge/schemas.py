"""JSON schemas for every file the toolkit reads or writes."""
from __future__ import annotations

import jsonschema

_num = {"type": "number"}
_num_list = {"type": "array", "items": _num}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

TURBINE = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "required": ["rotor_diameter", "hub_height", "wind_speeds", "power_w", "ct",
                         "cut_in", "cut_out", "rated_power"],
            "properties": {
                "rotor_diameter": _num, "hub_height": _num, "wind_speeds": _num_list,
                "power_w": _num_list, "ct": _num_list, "cut_in": _num, "cut_out": _num,
                "rated_power": _num,
            },
        },
    ]
}

SCENARIO = {
    "type": "object",
    "required": ["positions", "wind_speed", "wind_direction", "ti"],
    "properties": {
        "positions": {"type": "array", "items": _point, "minItems": 1},
        "yaw": _num_list,
        "wind_speed": {"type": "number", "exclusiveMinimum": 0},
        "wind_direction": _num,
        "ti": {"type": "number", "minimum": 0, "maximum": 1},
        "turbine": TURBINE,
    },
}

RESULT = {
    "type": "object",
    "required": ["uw", "power_w", "total_w"],
    "properties": {"uw": _num_list, "power_w": _num_list, "total_w": _num},
}

RECORD = {
    "type": "object",
    "required": ["scenario_id", "positions", "yaw", "wind_speed", "wind_direction", "ti",
                 "power_w", "provenance"],
    "properties": {
        **SCENARIO["properties"],
        "scenario_id": {"type": "integer", "minimum": 0},
        "style": {"type": "string"},
        "power_w": _num_list,
        "provenance": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["random_yaw", "ga_sampled"]},
                "generation": {"type": "integer", "minimum": 0},
                "individual": {"type": "integer", "minimum": 0},
            },
        },
    },
}

MANIFEST = {
    "type": "object",
    "required": ["name", "kind", "master_seed", "n_scenarios", "wake_params", "ranges",
                 "split_fractions", "split_counts", "generator_version", "schema_version"],
    "properties": {
        "kind": {"enum": ["standard", "enhanced"]},
        "master_seed": {"type": "integer"},
        "n_scenarios": {"type": "integer", "minimum": 0},
        "split_fractions": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        "split_counts": {"type": "object"},
        "schema_version": {"const": 1},
    },
}

GRAPH = {
    "type": "object",
    "required": ["v", "edges", "e", "u"],
    "properties": {
        "v": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
        "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                             "minItems": 2, "maxItems": 2}},
        "e": {"type": "array", "items": _point},
        "u": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    },
}

CHECKPOINT = {
    "type": "object",
    "required": ["format", "kind", "config", "stats", "params", "meta"],
    "properties": {
        "format": {"const": "wakeforge-checkpoint/1"},
        "kind": {"enum": ["transformer", "gnn"]},
        "params": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["shape", "values"],
                "properties": {"shape": {"type": "array", "items": {"type": "integer"}},
                               "values": _num_list},
            },
        },
    },
}

GA_CONFIG = {
    "type": "object",
    "properties": {
        "population_size": {"type": "integer", "minimum": 2},
        "n_generations": {"type": "integer", "minimum": 1},
        "crossover_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "mutation_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "elitism": {"type": "integer", "minimum": 0},
        "tournament_size": {"type": "integer", "minimum": 1},
        "yaw_bound": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

CHAMPION = {
    "type": "object",
    "required": ["yaw", "fitness_w", "backend"],
    "properties": {"yaw": _num_list, "fitness_w": _num, "backend": {"type": "string"}},
}


def _validator(schema):
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema)


_VALIDATORS = {name: _validator(s) for name, s in {
    "scenario": SCENARIO, "result": RESULT, "record": RECORD, "manifest": MANIFEST,
    "graph": GRAPH, "checkpoint": CHECKPOINT, "ga_config": GA_CONFIG, "champion": CHAMPION,
}.items()}


def validate(kind: str, obj) -> None:
    """Raise ``jsonschema.ValidationError`` if ``obj`` does not match schema ``kind``."""
    _VALIDATORS[kind].validate(obj)


def validate_record(obj):
    validate("record", obj)


def validate_manifest(obj):
    validate("manifest", obj)
