"""Timespan views of a small dynamic graph and the diffusion matrices built on them."""

import numpy as np

from cldg.diffusion import heat_kernel, ppr_exact, sym_normalize
from cldg.sampler import SamplerConfig, sample_views
from cldg.synthetic import dynamic_sbm

np.set_printoptions(precision=3, suppress=True)

g = dynamic_sbm(num_nodes=60, num_edges=400, seed=1)
print(f"{g.num_nodes} nodes, {g.num_edges} edges over [{g.t_min}, {g.t_max}]")

# Each strategy picks v window centers; windows are span/s long.
for strategy in ("sequential", "high", "low", "random"):
    vs = sample_views(g, SamplerConfig(strategy, s=4, v=2, seed=0))
    desc = ", ".join(f"[{lo:.2f}, {hi:.2f}] {v.num_active} nodes" for (lo, hi), v in zip(vs.windows, vs.views))
    print(f"{strategy:>10}: {desc}")

# Overlapping windows share most of their edges; sequential ones share none.
vs = sample_views(g, SamplerConfig("high", s=4, v=3, seed=0))
a, b = vs.windows[:2]
print("high-overlap fraction:", (min(a[1], b[1]) - max(a[0], b[0])) / (a[1] - a[0]))

view = vs.views[0]
A = view.local_adj
print("local propagation (first 5 rows):")
print(sym_normalize(A, add_self_loops=True).toarray()[:5, :5])

S = ppr_exact(A, alpha=0.15)
print("PPR row sums:", S.sum(axis=1)[:5])
H, bound = heat_kernel(A, t=5.0)
print(f"heat kernel columns sum to {H.sum(axis=0)[:5]} (remainder bound {bound:.1e})")
