"""Besov-type and Triebel-Lizorkin-type norms on cycle(64).

Smooth functions get small norms at positive smoothness and rough ones get large
norms. With p = q the two families coincide exactly.
"""

import numpy as np

from hkframe.calibration import build_calibration, make_bump_pair
from hkframe.cubes import build_cubes
from hkframe.generate import generate, space_and_operator
from hkframe.norms import SpaceParams, type_norm

space, op = space_and_operator(generate("cycle", 64))
cubes = build_cubes(space, 0.5, 0)
calib = build_calibration(op, make_bump_pair(0.5, 2.0))
print(f"cycle(64): J_max = {calib.J_max}, cube levels {cubes.k_min}..{cubes.k_max}")

x = np.arange(64)
functions = {
    "constant": np.ones(64),
    "slow cosine": np.cos(2 * np.pi * x / 64),
    "fast cosine": np.cos(2 * np.pi * 24 * x / 64),
    "delta at 0": (x == 0).astype(float),
    "alternating": (-1.0) ** x,
}

print(f"\n{'function':>12} | {'B s=0.5':>9} {'F s=0.5':>9} | {'B s=1.5':>9} | {'F p=1,q=2':>9}")
for name, f in functions.items():
    b = type_norm(f, calib, cubes, SpaceParams(s=0.5)).value
    fn = type_norm(f, calib, cubes, SpaceParams(s=0.5, family="F")).value
    b15 = type_norm(f, calib, cubes, SpaceParams(s=1.5)).value
    f12 = type_norm(f, calib, cubes, SpaceParams(s=0.5, p=1, q=2, family="F")).value
    print(f"{name:>12} | {b:9.4f} {fn:9.4f} | {b15:9.4f} | {f12:9.4f}")

br = type_norm(functions["delta at 0"], calib, cubes, SpaceParams(s=0.5, tau=0.5))
print(f"\ntau = 0.5 for the delta: value {br.value:.4f} attained on cube {br.argmax_cube}, measure {br.cube_measure:g}")
print(f"recomputed from the breakdown: {br.recompute():.4f}")
