"""Equivalence spreads on cycle(64) and how they move under refinement to cycle(128)."""

import math

from hkframe.generate import generate
from hkframe.verify import build_context, refine_doc, verify_all

doc = generate("cycle", 64)
coarse = build_context(doc)
fine = build_context(refine_doc(doc))
results = verify_all(coarse, fine)

print(f"{'run':>22} {'spread n':>9} {'spread 2n':>9} {'change':>8}")
for rid, rep in results.items():
    if isinstance(rep, Exception):
        print(f"{rid:>22} refused: {rep}")
        continue
    rs = rep.refinement_stability
    ch = rs["relative_change"]
    flag = "" if math.isfinite(ch) and abs(ch) <= 0.5 else "  <- unstable"
    print(f"{rid:>22} {rs['spread_n']:9.3f} {rs['spread_refined']:9.3f} {ch:+8.1%}{flag}")
