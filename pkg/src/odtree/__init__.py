"""Optimal multivariate (oblique) classification trees via MILP, with
cutting planes, big-M rescaling, and LP-based data selection for scale."""

from .data import (
    ClassPartition,
    DataError,
    Dataset,
    FeatureKind,
    LeafCluster,
    Split,
    apply_scaling,
    cluster_by_leaf,
    load_csv,
    normalize,
    stratified_split,
)
from .tree import (
    AncestorSets,
    CategoricalRule,
    ObliqueTree,
    TreeError,
    ancestor_sets,
    axis_to_oblique,
)
from .cart import AxisTree, CartError, CartParams, gini, train_cart
from .formulation import (
    ExtractionError,
    FormulationError,
    FormulationParams,
    VarMap,
    add_categorical,
    build_model,
    embed_warm_start,
    extract_tree,
    rescale_to_unit_m,
)
from .cuts import CutConfig, add_cuts, prop1_cuts, theorem3_cuts, verify_cuts_against
from .selection import (
    BalancedResult,
    SelectionError,
    SelectionParams,
    SelectionResult,
    SelectionSummary,
    balanced_selection,
    hyperplane_distance_select,
    partition_sets,
    select_all,
    select_cluster,
    selection_lp_cluster,
    selection_lp_point,
)
from .pipeline import (
    BenchmarkTable,
    PipelineError,
    RunConfig,
    RunReport,
    benchmark,
    cross_validate,
    iterative_train,
    solve_training_milp,
    train_optimal,
    train_with_selection,
)

__version__ = "0.1.0"
