"""feelab: a simulation and optimization lab for transaction-fee markets.

The package covers the posted-price (base-fee) market and its offline LP
benchmark with exact dual certificates, the mempool scheduling MDP with
episodic natural-policy-gradient training, the homogeneous backlog model
solved by value iteration, and closed-form bang-bang pricing cycles.
"""

__version__ = "0.1.0"

from .core import (
    ArrivalStreamEnd,
    ExplicitArrivals,
    MempoolState,
    PoissonArrivals,
    SimConfig,
    TxClassGrid,
    UniformArrivals,
    apply_dynamics,
    make_rng,
    pool_size,
    sample_arrivals,
)
from .static_market import (
    BaseFeeTrace,
    OfflineInstance,
    SelectionOrder,
    Transaction,
    run_eip1559,
    select_block,
    update_price,
)
from .duality import (
    build_certificate,
    check_weak_duality,
    competitive_gamma,
    enumerate_offline_optimum,
    offline_optimum,
    onesided_optimum,
)
from .mdp import (
    MempoolEnv,
    check_delta_membership,
    estimate_occupancy,
    reward,
    schedule,
    step,
    transition_kernel,
)
from .npg import (
    SoftmaxPolicy,
    estimate_advantage,
    min_learning_rate,
    npg_update,
    run_episodic_npg,
    static_reduction_update,
)
from .homogeneous import HomogeneousConfig, extract_threshold, value_iteration
from .bangbang import k_range, min_capacity, overshoot_bound, simulate_cycle
