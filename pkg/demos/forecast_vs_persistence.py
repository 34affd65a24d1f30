"""Forecast a handful of suite sequences and compare against doing nothing.

The persistence baseline simply carries the last evidential grid forward.
The two-prong forecaster moves tracked dynamic evidence at constant velocity.
Here both are scored per step on the first sequences of each scene type,
with heuristic masks and with ground-truth footprint masks.
"""

from evigrid.grid import DynamicMask
from evigrid.pipeline import Segmenter, evaluate_dataset, represent_dataset, segment_sequence
from evigrid.prediction import PredictorConfig
from evigrid.sim import Dataset, standard_suite

suite = standard_suite(7)
pick = [0, 1, 10, 11, 20, 21]
subset = Dataset([suite.sequences[i] for i in pick], suite.config, suite.seed, suite.spec_hash,
                 [suite.names[i] for i in pick])
print("sequences:", ", ".join(subset.names))

reps = represent_dataset(subset)
heuristic = [segment_sequence(r, Segmenter()) for r in reps]
gt = [[f.gt_mask for f in seq] for seq in subset.sequences]
none = [[DynamicMask.zeros(subset.config.grid)] * len(seq) for seq in subset.sequences]

cfg = PredictorConfig()
reports = {
    "persistence": evaluate_dataset(reps, none, gt, cfg, baseline=True),
    "heuristic masks": evaluate_dataset(reps, heuristic, gt, cfg),
    "footprint masks": evaluate_dataset(reps, gt, gt, cfg),
}

print(f"\n{'step':>4}" + "".join(f"{name:>18}" for name in reports))
for step in range(cfg.sequence.horizon):
    print(f"{step + 1:>4}" + "".join(f"{r.mse_per_step[step]:>18.6f}" for r in reports.values()))
print(f"{'avg':>4}" + "".join(f"{r.mse_avg:>18.6f}" for r in reports.values()))
print(f"{'IS':>4}" + "".join(f"{r.is_avg:>18.3f}" for r in reports.values()))
