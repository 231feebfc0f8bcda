"""Where is the person?  Four estimators on the same test bins.

Trains the fingerprint baseline, Type-A, Type-B and Type-C on the target
samples of the campaign and compares mean position error on the 125
held-out grid cells.  Epoch and grid budgets are cut down for a quick
run, which leaves the CNNs undertrained; the acceptance suite uses the
full defaults.

    python demos/03_positioning.py
"""

import numpy as np

from cirsense.dataset import GridSpec, SplitSpec, generate_campaign
from cirsense.evaluation import LinkCombo, ModelSettings, comparison_table, emit_report, run_experiment_suite
from cirsense.gbt import BoostConfig
from cirsense.nn import TrainConfig
from cirsense.sim import SweepConfig, default_scene

samples = generate_campaign(GridSpec(), default_scene(0), SweepConfig(), seed=0)
split = SplitSpec.random(462, 125, 0.3, seed=0)
quick = ModelSettings(
    train=TrainConfig(epochs=25, patience=5),
    boost=BoostConfig(),
    boost_grid={"n_estimators": (100,), "max_depth": (3, 5), "learning_rate": (0.1,)},
)

reports = run_experiment_suite(samples, ["baseline", "typea", "typeb", "typec"], [LinkCombo((2, 3, 4))], split, "position", quick)
print(comparison_table(reports))
for r in reports:
    errs = np.array([e for e, _ in r.error_cdf])
    print(f"{r.model_id:9} median {np.median(errs):.2f} m, 90th pct {np.quantile(errs, 0.9):.2f} m")

emit_report(reports, "svg-plot", "position_cdf.svg")
print("CDF plot written to position_cdf.svg")
