"""
Bottleneck sweep on the synthetic shapes world
==============================================

Runs a small sweep, prints the curve next to the closed-form oracle and
renders the report. Execute cell by cell or as a plain script.
"""

#%%
import tempfile
from pathlib import Path

import numpy as np

from infobottleneck.harness import SweepConfig, render_report, run_probes, run_sweep
from infobottleneck.synthetic import SyntheticWorldConfig, generate_vision_world, oracle_best_linear

out = Path(tempfile.mkdtemp(prefix="ib_demo_"))
cfg = SweepConfig.from_dict({"world": {}, "pipeline": "vision-pca", "sizes": [1, 2, 4, 8, 12, 32],
                             "seeds": [0], "output": "vision"}, out)

#%%
# one seed takes about 15 s
rep = run_sweep(cfg)
m = "pixel_correlation"
print("floor %.3f  full %.3f  ceiling %.3f" % (rep.floor[m].mean, rep.full_input[m].mean, rep.ceiling[m].mean))
for L in rep.bottleneck_sizes:
    print("L=%-3d r=%.3f  frac_of_full=%.2f  effdim=%.0f"
          % (L, rep.scores[m][L].mean, rep.fraction_of_full[m][L], rep.mean_effective_dim(L)))

#%%
# what a perfect linear readout of the code could do at each width
_, gt = generate_vision_world(SyntheticWorldConfig())
print([round(oracle_best_linear(gt, L), 4) for L in rep.bottleneck_sizes])

#%%
# which stimulus features survive the squeeze
for row in run_probes(cfg):
    if row.probe in ("class", "rms_contrast"):
        print(row.probe, row.L, round(row.explained, 3))

#%%
paths = render_report(cfg.output_dir)
print("\n".join(str(p) for p in paths))
print((cfg.output_dir / "summary.txt").read_text())
