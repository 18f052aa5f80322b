"""Exact desk-scale verification of randomized hypercube partitions."""

from .bounds import (
    BoundQuery,
    LogProbability,
    bernstein_bound,
    minimal_width,
    prop1_failure_log_bound,
    prop2_failure_log_bound,
)
from .distribution import (
    Distribution,
    Theorem8Certificate,
    Theorem8Failure,
    level_sets,
    project_set_to_distribution,
    random_distribution,
    theorem8_construct,
    verify_distribution_conclusion,
)
from .dyadic import DyadicRational, parse_rational
from .errors import BudgetExceeded, ConstructionFailed, UsageError
from .hypercube import (
    DenseSubset,
    IndexSet,
    Partition,
    PointMask,
    check_selectors,
    coset_selectors,
    intersect_translates,
    subgroup_closure,
    translate,
)
from .partition import (
    PartitionSearchExhausted,
    compute_T_U,
    find_partition,
    sample_partition,
    verify_prop1,
)
from .tower import (
    BlockSpec,
    BlockTower,
    CylinderUnion,
    F_eval,
    build_tower,
    covering_check,
    evaluate_constraints,
    fiber,
    reference_schedule,
)
from .translate_lemma import (
    BlockSlice,
    StageParams,
    TJCertificate,
    build_T_J,
    jxz_summability,
    level_distribution,
    trim,
    verify_TJ,
)

__version__ = "0.1.0"
