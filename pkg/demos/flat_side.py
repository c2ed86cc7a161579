"""Watch the flat side of a convex graph shrink and then disappear.

Starts from the standard generator (flat disc of radius 0.5 in the plane
of a 3D graph), tracks its radius along a few rays and the band monitors,
and reports when the origin stops being flat.
"""

from __future__ import annotations

import numpy as np

from flatflow.estimates import band_stats
from flatflow.flow import FlowConfig, run_flow
from flatflow.interface import EmptyInterface, extract_interface

cfg = FlowConfig(dim=3, points_per_axis=49, flat_radius=0.5, nondegeneracy=1.0, t_end=0.06)
print(f"{'t':>7} {'min radius':>11} {'max radius':>11} {'min |grad g|':>13} {'min g_t':>9}")


def report(cur, nxt):
    stats = band_stats(cur, nxt, (0.05, 0.5))
    try:
        snap = extract_interface(cur)
    except EmptyInterface:
        print(f"{cur.time:7.3f} {'flat side gone':>23} {stats.grad_min:13.3f} {stats.gt_min:9.3f}")
        return
    print(f"{cur.time:7.3f} {snap.gamma.min():11.4f} {snap.gamma.max():11.4f} {stats.grad_min:13.3f} {stats.gt_min:9.3f}")


run_flow(cfg, on_output=report, output_times=np.linspace(0.0, cfg.t_end, 13), keep_fields=False)
