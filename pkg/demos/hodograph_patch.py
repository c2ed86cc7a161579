"""Build a partial-Legendre patch near the free boundary of a 2D run.

The height h(z, y, t) is obtained by inverting the pressure along the
normal direction; the script prints how well derivatives of h reproduce
those of the pressure and the Hölder seminorms of the monitored quantities.
"""

from __future__ import annotations

import numpy as np

from flatflow.flow import FlowConfig, run_flow
from flatflow.hodograph import build_patch, dictionary_check, g_jets_at_patch, holder_seminorms, pressure_field
from flatflow.interface import extract_interface

cfg = FlowConfig(dim=2, extent=1.2, points_per_axis=257, flat_radius=0.6, nondegeneracy=0.5, t_end=0.1)
history = run_flow(cfg, output_times=np.concatenate([[0.0], np.linspace(0.01, 0.1, 37)]))
g_history = [pressure_field(s) for s in history.snapshots if s.time > 0]
base = extract_interface(history.snapshots[-1], directions=np.array([[1.0, 0.0]])).gamma[0]
patch = build_patch(g_history, (base, 0.0), 0.3)

check = dictionary_check(patch, g_jets_at_patch(patch, g_history))
print(f"base point x1 = {base:.4f}, worst dictionary mismatch {check.worst:.4f}")
for name, value in sorted(holder_seminorms(patch, alpha=0.25).seminorms.items()):
    print(f"  [{name}] = {value:.4f}")
