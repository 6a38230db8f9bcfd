"""
Surrogate in the loop
=====================

Generate a small dataset, train the graph transformer on it, then swap the
simulator for the surrogate inside the GA. Sizes are kept small so the
script runs in a couple of minutes; the surrogate is rough as a result.
"""

# %%
import numpy as np

from wakeforge import make_scenario, simulate_farm
from wakeforge.dataset import DatasetRanges, gen_standard, split
from wakeforge.ga import GaConfig, SimulatorBackend, SurrogateBackend, run_ga
from wakeforge.models import TransformerConfig
from wakeforge.training import TrainConfig, evaluate, train

recs = gen_standard(600, DatasetRanges(n_turbines=(2, 6)), seed=0)
sp = split(recs, seed=0)
[len(sp[k]) for k in ("train", "val", "test")]

# %%
# A 2-block toy transformer trained for a few thousand steps.
tc = TrainConfig(batch_size=32, total_steps=3000, max_lr=1e-3, warmup_steps=150, eval_every=500)
res = train("transformer", TransformerConfig(), tc, sp["train"], sp["val"])
evaluate(res.model, sp["test"])

# %%
# Three turbines in a row; the surrogate evaluates a whole population in
# one batched forward pass.
row = make_scenario([[0, 0], [450, 0], [900, 0]], wind_speed=10.0, wind_direction=270.0, ti=0.08)
cfg = GaConfig(population_size=60, n_generations=30, seed=1)
sim_best, _ = run_ga(SimulatorBackend(row), 3, cfg)
sur_best, _ = run_ga(SurrogateBackend(res.model, row), 3, cfg)

# %%
# Judge both champions with the simulator.
for name, c in (("simulator GA", sim_best.chromosome), ("surrogate GA", sur_best.chromosome)):
    p = simulate_farm(row.with_yaw(c)).total_power
    print(f"{name:13s} yaw {np.round(c, 1)}  {p / 1e3:7.1f} kW")
print(f"zero yaw      {simulate_farm(row).total_power / 1e3:7.1f} kW")
