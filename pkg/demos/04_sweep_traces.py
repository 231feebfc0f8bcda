"""Round-tripping sweeps through the plain-text trace format.

Measured sweeps arrive as one CSV per link (frequency, real, imaginary).
This writes the three synthetic links of one scene to disk, reads them
back, and shows that malformed files fail with the offending line.

    python demos/04_sweep_traces.py
"""

import tempfile
from pathlib import Path

from cirsense._container import FormatError
from cirsense.dataset import export_sweep_trace, import_sweep_traces
from cirsense.dsp import cir_from_sweep, features_from_cirs
from cirsense.sim import SweepConfig, default_scene, synthesize_scene_sweeps

cfg = SweepConfig()
sweeps = synthesize_scene_sweeps(default_scene(0), cfg)

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    for s in sweeps:
        export_sweep_trace(s, tmp / f"rx{s.link_id}.csv")
    print((tmp / "rx2.csv").read_text().splitlines()[:4])

    back = import_sweep_traces(tmp, cfg)
    print("links", [b.link_id for b in back], "identical:", all((a.samples == b.samples).all() for a, b in zip(sweeps, back)))
    fv = features_from_cirs([cir_from_sweep(b) for b in back])
    print("features", fv.values.shape)

    lines = (tmp / "rx3.csv").read_text().splitlines()
    lines[10] = lines[10].replace(",", ";", 1)
    (tmp / "rx3.csv").write_text("\n".join(lines) + "\n")
    try:
        import_sweep_traces(tmp / "rx3.csv", cfg)
    except FormatError as exc:
        print("rejected:", exc)
