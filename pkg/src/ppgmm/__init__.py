"""
Privacy-preserving distributed EM for Gaussian mixtures.

A simulator and library: GMM math (:mod:`ppgmm.gmm`), network topologies
(:mod:`ppgmm.graph`), PDMM consensus (:mod:`ppgmm.consensus`), three
distributed EM protocols (:mod:`ppgmm.protocols`), adversary views and
attacks (:mod:`ppgmm.adversary`), mutual-information leakage measurement
(:mod:`ppgmm.privacy`) and datasets (:mod:`ppgmm.data`).
"""

from .adversary import (
    AdversaryView,
    eavesdrop_view,
    passive_view,
    reconstruct_federated,
    reconstruct_secure_sum,
    subspace_honest_sums,
)
from .consensus import ConsensusProblem, run_consensus
from .data import (
    Dataset,
    load_csv,
    parkinsons_standin,
    partition,
    pca,
    synthetic_gmm_data,
    synthetic_private_data,
)
from .errors import (
    DegenerateDenominator,
    EmptyComponent,
    HonestSubgraphDisconnected,
    InsufficientSamples,
    MaxItersExceeded,
    NonNumeric,
    NotFound,
    NotPositiveDefinite,
    ParseError,
    PPGMMError,
    RankDeficient,
    RetriesExhausted,
    Unrecoverable,
)
from .gmm import (
    GlobalSums,
    GmmParams,
    LocalUpdates,
    centralized_em,
    e_step,
    global_update,
    init_params,
    local_updates,
)
from .graph import (
    Graph,
    edge_signs,
    fig1_graph,
    find_hamiltonian_cycle,
    is_connected,
    random_geometric_graph,
    remove_nodes,
)
from .privacy import ksg_mi, monte_carlo_leakage, normalized_mi
from .protocols import run_federated_em, run_secure_sum_em, run_subspace_em, secure_sum

__version__ = "0.1.0"
