# %% [markdown]
# Subspace perturbation: big dual noise, unchanged answer.
#
# PDMM duals only converge inside a subspace H fixed by the graph. Noise
# placed in the orthogonal complement never decays, so it keeps masking the
# private inputs, yet the primal variables reach the exact average.

# %%
import numpy as np

from ppgmm import ConsensusProblem, fig1_graph, run_consensus
from ppgmm.consensus import estimate_convergent_subspace, subspace_diagnostics

g = fig1_graph()
s = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
basis = estimate_convergent_subspace(g)
print(f"2m = {2 * g.m} dual slots, estimated dim H = {basis.shape[1]}")

# %%
for sigma in (0.0, 1e2, 1e4):
    res = run_consensus(ConsensusProblem(g, s), sigma_lambda=sigma, tol=1e-10, seed=3, keep_duals=True)
    diag = subspace_diagnostics(res.duals, basis)
    print(f"sigma={sigma:>7g}: rounds {res.iterations:4d}, "
          f"max |y - 3| = {np.abs(res.y - 3).max():.1e}, "
          f"orthogonal part {diag['orthogonal'][0]:.3g} -> {diag['orthogonal'][-1]:.3g}")

# %% [markdown]
# The first broadcast of each node already mixes its input with noise of
# scale sigma through the duals it reads.

# %%
res = run_consensus(ConsensusProblem(g, s), sigma_lambda=1e2, tol=1e-10, seed=3)
first = res.transcript.messages("primal_broadcast")[:5]
for msg in first:
    print(f"node {msg.sender} sends {msg.payload[0]:9.3f}  (its input is {s[msg.sender - 1]})")
