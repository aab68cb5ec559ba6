"""Analysis and synthesis with a Neumann-series frame on the level-3 gasket graph."""

import numpy as np

from hkframe.calibration import build_calibration, make_bump_pair
from hkframe.cubes import build_cubes, subcube_grid
from hkframe.frame import analysis, build_synthesis_frame, synthesis
from hkframe.generate import generate, space_and_operator
from hkframe.verify import make_battery

space, op = space_and_operator(generate("gasket", 3))
cubes = build_cubes(space, 0.5, 0)
calib = build_calibration(op, make_bump_pair(0.5, 2.0))
grid = subcube_grid(cubes, j0=1)
frame = build_synthesis_frame(calib, grid, tol=1e-12)

print(f"gasket(3): {space.n} points, eps0 = {frame.eps0}")
for j, d in sorted(frame.diagnostics.items()):
    print(f"  level {j}: {grid.level(j).size:3d} samples  ||R|| = {d.r_norm:.4f}  terms = {d.terms:2d}  tail <= {d.tail_bound:.1e}")

for name, f in make_battery(op, seed=0, size=8, calib=calib):
    coeffs = analysis(f, calib, grid)
    rec = synthesis(coeffs, frame)
    err = np.linalg.norm(rec - f) / np.linalg.norm(f)
    print(f"  {name:>14}: {coeffs.flat().size} coefficients, relative error {err:.1e}")
