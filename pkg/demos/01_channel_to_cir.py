"""From scene geometry to a channel impulse response.

Builds the default lab scene, drops a person on the floor grid and
follows one Tx -> Rx link through the pipeline: propagation paths,
swept-frequency samples, and the CIR whose peaks sit at the path delays.

    python demos/01_channel_to_cir.py
"""

import numpy as np

from cirsense.dsp import cir_from_sweep, features_from_cirs
from cirsense.sim import SPEED_OF_LIGHT, SweepConfig, Target, build_paths, default_scene, synthesize_sweep

cfg = SweepConfig()  # 28 GHz centre, 1 GHz span, 1001 points
scene = default_scene(seed=0)
print(f"sweep step {cfg.frequency_step_hz / 1e6:.3f} MHz, {len(scene.clutter_points)} clutter points")

# person standing half way along the Tx -> Rx2 line of sight
person = Target(position=(2.1, 2.2))
occupied = scene.with_target(person, seed=1)

paths = build_paths(occupied, link_index=0)
los, bounce = paths[0], paths[-1]
print(f"LoS      delay {los.delay_s * 1e9:6.2f} ns  |a| {abs(los.gain):.4f}  (blocked by the body)")
print(f"target   delay {bounce.delay_s * 1e9:6.2f} ns  |a| {abs(bounce.gain):.4f}")

sweep = synthesize_sweep(paths, cfg, rng_seed=1, link_id=2)
cir = cir_from_sweep(sweep)
mag = np.abs(cir.taps)

# the strongest taps line up with the strongest paths
top = np.sort(np.argsort(mag)[-4:])
print("strongest taps (ns):", np.round(cir.delays()[top] * 1e9, 2))
print("path delays    (ns):", np.round(sorted(p.delay_s * 1e9 for p in paths)[:4], 2))
print(f"one tap spans {cir.bin_spacing_s * 1e9:.3f} ns, i.e. {cir.bin_spacing_s * SPEED_OF_LIGHT:.3f} m of path")

# compare with the empty room: the body removes LoS energy and adds its bounce
empty = cir_from_sweep(synthesize_sweep(build_paths(scene, 0), cfg, rng_seed=1, link_id=2))
k = int(round(los.delay_s / cir.bin_spacing_s))
print(f"LoS tap magnitude empty {abs(empty.taps[k]):.4f} -> occupied {mag[k]:.4f}")

fv = features_from_cirs([cir], k_taps=256)
print("feature vector", fv.values.shape, "max", fv.values.max())
