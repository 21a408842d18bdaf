"""flowmatch: execute tabular transform programs as data-flow graphs and
match analysis decisions against multi-alternative ground truth."""

__version__ = "0.1.0"

from .table import (  # noqa: F401
    Column,
    DataTable,
    ToleranceSpec,
    column_equal,
    fingerprint,
    load_table,
    make_column,
    write_table,
)
from .expressions import eval_expression  # noqa: F401
from .parser import parse_expression, parse_program  # noqa: F401
from .transforms import (  # noqa: F401
    StepTrace,
    TransformProgram,
    apply_unit,
    run_program,
)
from .graph import (  # noqa: F401
    FlowGraph,
    GroundTruthGraphSet,
    build_flow_graph,
    merge_alternatives,
)
from .isomorphism import fragments_isomorphic  # noqa: F401
from .matching import (  # noqa: F401
    ConceptualVariable,
    DecisionSet,
    MatchConfig,
    MatchReport,
    StatModel,
    fuzzy_match,
    match_conceptual_variables,
    match_models,
    match_submission,
    report_from_doc,
    report_to_doc,
    value_match,
)
from .semantic import (  # noqa: F401
    BackendConfig,
    LexicalMatcher,
    MatchAnswer,
    MatchQuery,
    RemoteMatcher,
    TranscriptCache,
    lexical_match,
)
from .metrics import (  # noqa: F401
    ScoreCard,
    average_precision,
    bootstrap_f1,
    build_groups,
    compute_scorecard,
    coverage_at_k,
    f1,
    mcq_accuracy,
    precision,
    weighted_f1,
)
from .decisions import load_decision_set, validate_paths  # noqa: F401
