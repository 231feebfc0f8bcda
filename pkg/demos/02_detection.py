"""Is anybody there?  Target detection with the shared-pipeline CNN.

Generates the paired null/target campaign on the full 462-cell grid,
splits it by grid bin and trains Type-A on one link and on all three.
Training is trimmed (fewer epochs) so the script finishes in about a
minute; the full protocol lives behind ``cirsense reproduce``.

    python demos/02_detection.py
"""

from cirsense.dataset import GridSpec, SplitSpec, generate_campaign
from cirsense.evaluation import LinkCombo, ModelSettings, comparison_table, run_experiment_suite
from cirsense.nn import TrainConfig
from cirsense.sim import SweepConfig, default_scene

samples = generate_campaign(GridSpec(), default_scene(0), SweepConfig(), seed=0)
print(len(samples), "samples,", sum(s.is_target for s in samples), "with a person")

split = SplitSpec.random(462, n_test=125, val_fraction=0.3, seed=0)
quick = ModelSettings(train=TrainConfig(epochs=15, patience=5))
reports = run_experiment_suite(samples, ["typea"], [LinkCombo((2,)), LinkCombo((2, 3, 4))], split, "detect", quick)
print(comparison_table(reports))
