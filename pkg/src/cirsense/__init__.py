"""Passive human detection and positioning from multistatic channel impulse responses.

Subpackages and modules:

- ``sim``: scatter-point propagation model and frequency-sweep synthesis
- ``dsp``: sweep to CIR transform and learner features
- ``dataset``: grid campaign, splits, dataset files, sweep-trace import
- ``nn``: from-scratch 1D CNNs (Type-A shared pipeline, Type-B per-link pipelines)
- ``gbt``: from-scratch gradient-boosted trees (Type-C)
- ``evaluation``: fingerprint baseline, experiment suite, metrics, reports
- ``config`` / ``cli``: run configuration and the ``cirsense`` command
"""

__version__ = "0.1.0"
