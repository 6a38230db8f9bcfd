import json

import jsonschema
import numpy as np
import pytest

from wakeforge import WakeParams, simulate_farm
from wakeforge.dataset import (DatasetManifest, DatasetRanges, build_dataset, check_disjoint,
                               gen_enhanced, gen_standard, read_dataset, regenerate, split)
from wakeforge.ga import GaConfig

SMALL = DatasetRanges(n_turbines=(2, 12))
FAST_GA = GaConfig(population_size=12, n_generations=6)


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_single_record_in_ranges():
    (r,) = gen_standard(1, seed=9)
    c = r.scenario.conditions
    assert 2 <= r.scenario.n_turbines <= 100
    assert 8 <= c.wind_speed <= 15 and 0 <= c.wind_direction <= 359 and 0.05 <= c.turbulence_intensity <= 0.15
    assert np.all(np.abs(r.scenario.yaw) <= 30)
    assert r.provenance == {"kind": "random_yaw"}


def test_range_contract_over_many():
    recs = gen_standard(1000, SMALL, seed=1)
    u = np.array([r.scenario.conditions.wind_speed for r in recs])
    assert 8 <= u.min() and u.max() <= 15
    n = np.array([r.scenario.n_turbines for r in recs])
    assert n.min() >= 2 and n.max() <= 12
    assert {r.style for r in recs} == {"cluster", "single_string", "multiple_string", "parallel_string"}


def test_target_fidelity():
    for r in gen_standard(30, SMALL, seed=2):
        np.testing.assert_allclose(simulate_farm(r.scenario).powers, r.power_w, rtol=1e-9)


def test_parallel_matches_serial():
    a = gen_standard(12, SMALL, seed=5, workers=1)
    b = gen_standard(12, SMALL, seed=5, workers=2)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]


def test_split_counts_and_disjointness():
    recs = gen_standard(10, SMALL, seed=0)
    sp = split(recs, (0.8, 0.1, 0.1), seed=0)
    assert [len(sp[s]) for s in ("train", "val", "test")] == [8, 1, 1]
    check_disjoint(sp)
    with pytest.raises(ValueError):
        split(recs, (0.5, 0.2, 0.2))


def test_enhanced_records():
    recs = gen_enhanced(3, FAST_GA, samples_per_scenario=1, seed=1, ranges=SMALL)
    assert len(recs) == 3
    assert all(r.provenance["kind"] == "ga_sampled" for r in recs)
    recs = gen_enhanced(4, FAST_GA, samples_per_scenario=10, seed=2, ranges=SMALL)
    assert len(recs) == 40
    assert all(np.all(np.abs(r.scenario.yaw) <= 30) for r in recs)
    for r in recs:
        assert 0 <= r.provenance["generation"] < 6 and 0 <= r.provenance["individual"] < 12
        np.testing.assert_allclose(simulate_farm(r.scenario).powers, r.power_w, rtol=1e-9)
    # without replacement: no (generation, individual) pair repeats within a scenario
    keys = [(r.scenario_id, r.provenance["generation"], r.provenance["individual"]) for r in recs]
    assert len(set(keys)) == len(keys)
    with pytest.raises(ValueError):
        gen_enhanced(1, FAST_GA, samples_per_scenario=73)


def test_split_keeps_scenarios_together():
    recs = gen_enhanced(10, FAST_GA, samples_per_scenario=3, seed=3, ranges=SMALL)
    sp = split(recs, seed=1)
    check_disjoint(sp)
    assert sum(len(v) for v in sp.values()) == 30
    for recs_ in sp.values():
        ids = [r.scenario_id for r in recs_]
        assert all(ids.count(i) == 3 for i in ids)


@pytest.mark.slow
def test_enhanced_samples_include_better_configs():
    cfg = GaConfig(population_size=20, n_generations=10)
    recs = gen_enhanced(100, cfg, samples_per_scenario=25, seed=4, ranges=DatasetRanges(n_turbines=(2, 8)))
    by = {}
    for r in recs:
        by.setdefault(r.scenario_id, []).append(float(r.power_w.sum()))
    hits = sum(max(v) > np.median(v) for v in by.values())
    assert hits >= 90


@pytest.mark.parametrize("compressed", [False, True])
def test_write_read_and_regenerate(tmp_path, compressed):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    manifest, splits, paths = build_dataset(d1, "toy", "standard", 20, seed=7, ranges=SMALL,
                                            compressed=compressed)
    m2, back = read_dataset(d1, "toy")
    for s in splits:
        assert [r.to_dict() for r in back[s]] == [r.to_dict() for r in splits[s]]
    assert m2.split_counts == {"train": 16, "val": 2, "test": 2}
    regenerate(m2, d2)
    assert _files(d1) == _files(d2)


def test_enhanced_regenerates(tmp_path):
    build_dataset(tmp_path / "a", "enh", "enhanced", 4, seed=1, ranges=SMALL, ga_config=FAST_GA,
                  samples_per_scenario=5)
    m, _ = read_dataset(tmp_path / "a", "enh")
    regenerate(m, tmp_path / "b")
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_wake_params_pinned(tmp_path):
    build_dataset(tmp_path, "k", "standard", 5, seed=0, ranges=SMALL, params=WakeParams(k=0.05))
    m, sp = read_dataset(tmp_path, "k")
    assert WakeParams.from_dict(m.wake_params).k == 0.05
    for r in sp["train"]:
        np.testing.assert_allclose(simulate_farm(r.scenario, WakeParams(k=0.05)).powers, r.power_w,
                                   rtol=1e-9)


def test_corrupt_record_rejected(tmp_path):
    build_dataset(tmp_path, "c", "standard", 10, seed=0, ranges=SMALL)
    p = tmp_path / "c.train.jsonl"
    lines = p.read_text().splitlines()
    obj = json.loads(lines[0])
    del obj["power_w"]
    lines[0] = json.dumps(obj)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(jsonschema.ValidationError):
        read_dataset(tmp_path, "c")


def test_manifest_fractions_validated():
    with pytest.raises(ValueError):
        DatasetManifest("x", "standard", 0, 1, {}, {}, (0.5, 0.5, 0.5))
