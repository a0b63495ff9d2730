"""arbo: compile binary decision trees to matrix form and score them through
provably equivalent backends (classic traversal, dense matrix, packed
bitmask, ternary pattern, indicator sum, and differentiable soft variants).
"""

from .backends import (
    Activation,
    GeneralizedMasks,
    Prediction,
    SoftmaxSelector,
    SparsemaxSelector,
    classify_generalized,
    default_index_weights,
    first_argmax,
    get_activation,
    leaf_predictions,
    margins,
    negate_mask_zeros,
    predict_bitwise,
    predict_matrix,
    predict_soft,
    predict_sum_product,
    predict_ternary,
    register_activation,
    scale_mask_columns,
    softmax_select,
    ternary_scores,
    test_phase,
    traversal_phase,
    weighted_sparsemax,
)
from .compiler import (
    CompiledTree,
    SumProductForm,
    TernaryForm,
    characteristic_vector,
    compile_tree,
    complement_bits,
    decode_structure,
    left_reachable_set,
    masks_from_tree,
    rebuild_tree,
    sum_product_form,
    ternary_form,
    tuples_equivalent,
)
from .ensemble import BenchReport, Ensemble, run_bench, score_batch, score_ensemble
from .errors import (
    ArboError,
    BackendMismatchError,
    ConfigError,
    DatasetError,
    DegenerateTreeError,
    DomainError,
    InputError,
    InvalidStructureError,
    MalformedDocumentError,
    UnknownVersionError,
    UnsupportedFormError,
)
from .fuzz import GeneratorParams, enumerate_shapes, generate_random_tree, random_inputs
from .io import load_dataset_csv, load_model, read_document, save_model
from .structure import (
    ValidationReport,
    augmented_invertible,
    check_complement_pairs,
    det_exact,
    rank_exact,
    validate_structure,
)
from .trees import (
    AxisTest,
    CategoricalTest,
    ComposedTest,
    ConstantLeaf,
    DecisionTree,
    FeatureSchema,
    LeafOutcome,
    LinearLeaf,
    Node,
    ObliqueTest,
    build_tree,
    evaluate_classic,
    tree_depth,
)

__version__ = "0.1.0"
