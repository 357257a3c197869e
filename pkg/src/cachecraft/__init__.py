"""Exact-arithmetic toolkit for coded caching with unequal cache sizes.

Computes minimum worst-case delivery loads, uncoded-placement lower bounds,
and optimal cache-size allocations under heterogeneous link capacities, then
materializes and verifies the resulting placement and XOR-multicast
schedules at the packet level.  All optimization is exact rational; results
are decisive equalities, not tolerances.
"""

from .core import (
    CacheInstance,
    CapacityInstance,
    InstanceError,
    Rational,
    ResourceLimitError,
    b_family,
    cache_instance,
    capacity_instance,
    enumerate_subsets,
    validate_instance,
)
from .formulas import (
    AllocationResult,
    RegimeError,
    RegionLabel,
    bound_amiri,
    bound_cutset,
    build_scheme_large_memory,
    build_scheme_lemma1,
    build_scheme_small_memory,
    build_scheme_three_user,
    dct_closed_form,
    dct_uniform,
    gamma_weight,
    load_large_memory,
    load_small_memory,
    load_three_user,
)
from .lp import LpProblem, LpSolution, check_feasible, solve as solve_lp
from .model import (
    DeliveryPlan,
    PlacementVector,
    Scheme,
    build_delivery_rows,
    build_placement_rows,
    check_side_information,
    make_scheme,
)
from .scheme import MaterializedScheme, SimulationReport, materialize, measure, simulate_and_decode
from .solve import (
    BoundValue,
    DctSolution,
    LoadSolution,
    evaluate_dct,
    solve_min_dct,
    solve_min_load,
    solve_uncoded_lower_bound,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
