"""Drive the whole command-line chain from Python and keep the artifacts.

Generates one small world, represents it, segments it, forecasts it with and
without masks, scores both and renders a few grids as PPM images. Everything
lands in ./walkthrough (or the directory given as the first argument).
"""

import json
import sys
from pathlib import Path

from evigrid.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "walkthrough")
out.mkdir(exist_ok=True)
spec = {
    "walls": [{"start": [-20, 8], "end": [30, 8]}, {"start": [-20, -8], "end": [30, -8]}],
    "agents": [{"size": [4.5, 1.8], "trajectory": {"waypoints": [[-10, 3], [40, 3]], "speeds": [[0, 5]]}}],
    "seed": 3,
}
(out / "world.json").write_text(json.dumps(spec))


def run(*argv):
    print("$ evigrid", " ".join(map(str, argv)))
    code = main(["--quiet", *map(str, argv)])
    if code:
        sys.exit(f"stopped: exit code {code}")


run("gen", "--spec", out / "world.json", "--frames", 20, "--grid-size", 96, "--out", out / "data")
run("repr", out / "data", "--out", out / "repr")
run("segment", out / "repr", "--out", out / "masks")
run("predict", out / "repr", "--masks", out / "masks", "--out", out / "pred")
run("predict", out / "repr", "--baseline", "persistence", "--out", out / "base")
run("eval", out / "pred", out / "repr", "--masks", out / "masks", "--out", out / "report")
run("eval", out / "base", out / "repr", "--out", out / "report_base")
seq = out / "repr" / "world"
run("render", seq / "sgm_010.egrd", seq / "eogm_010.egrd", out / "masks" / "world" / "mask_010.egrd",
    out / "pred" / "world" / "pred_015.egrd", "--out", out / "images")

ours = json.loads((out / "report" / "report.json").read_text())
base = json.loads((out / "report_base" / "report.json").read_text())
print(f"\nmean MSE over 15 steps: forecast {ours['mse_avg']:.6f}, persistence {base['mse_avg']:.6f}")
print("images:", ", ".join(sorted(p.name for p in (out / "images").iterdir())))
