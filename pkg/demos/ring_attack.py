# %% [markdown]
# Secure summation around a ring, and why two curious neighbours break it.
#
# Five nodes sit on the small example network; the ring 1-2-3-4-5 is a
# Hamiltonian cycle. Node 1 masks its value, every node adds its own, and
# node 1 strips the mask at the end. Nodes 2 and 4 collude.

# %%
import numpy as np

from ppgmm import fig1_graph, find_hamiltonian_cycle, passive_view, reconstruct_secure_sum
from ppgmm.protocols import run_secure_sum_em

g = fig1_graph()
print("edges:", g.edges)
print("ring :", find_hamiltonian_cycle(g))

# %%
# one private scalar per node, two mixture components, three EM iterations
rng = np.random.default_rng(0)
points = [rng.normal(size=(1, 1)) for _ in g.nodes]
run = run_secure_sum_em(g, points, c=2, T=3, seed=1)

for msg in run.transcript.messages("ring_relay", em_iter=0)[:5]:
    print(f"{msg.sender} -> {msg.receivers[0]}: {msg.payload}")

# %% [markdown]
# The coalition sees what nodes 2 and 4 send and receive plus their own
# statistics. Node 3 sits between them, so the difference of the two
# relays around it, minus node 2's own share, is node 3's value.

# %%
view = passive_view(run, {2, 4})
rec = reconstruct_secure_sum(view, run.cycle)
for t in range(run.iterations):
    got = rec.value(3, t, "a")
    true = run.local[t][2].a
    print(f"iter {t}: recovered a_3 = {got}, true = {true}, error = {np.abs(got - true).max():.1e}")

# %%
# nodes 1 and 5 form a contiguous honest stretch: only their sum leaks
nodes, seg = rec.segment_of(1, 0, "a")
print("segment", nodes, "sum", seg, "true", run.local[0][0].a + run.local[0][4].a)

# %% [markdown]
# With b = a * x for a single point, node 3's datum follows at once.

# %%
x3 = rec.value(3, 0, "b")[0, 0] / rec.value(3, 0, "a")[0]
print("node 3 datum:", x3, "true:", points[2][0, 0])
