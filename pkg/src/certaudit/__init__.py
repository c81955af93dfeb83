"""Feature-sensitivity auditing of classifiers through explanation queries."""

from .auditors import (
    BaselineAuditor,
    GeneralAuditor,
    LinearAnchorAuditor,
    LinearCounterfactualAuditor,
    ThresholdAnchorAuditor,
    ThresholdCounterfactualAuditor,
    audit_et_anchor,
    audit_et_counterfactual,
    audit_lc_anchor,
    audit_lc_counterfactual,
    baseline_audit,
    default_rounds,
    general_audit,
    required_pairs,
)
from .errors import (
    AuditError,
    ConfigurationError,
    DegenerateHypothesisError,
    DomainError,
    ParseError,
    ProtocolError,
    RequiresWarmupError,
    UntruthfulDSError,
    UnverifiableError,
)
from .explanations import (
    BoxAnchor,
    CounterfactualPoint,
    IntervalAnchor,
    RayAnchor,
    anchor_et,
    anchor_lc,
    counterfactual_et,
    counterfactual_lc,
)
from .hypotheses import (
    ExtendedThreshold,
    HypothesisPool,
    LinearClassifier,
    PairSampler,
    dimension_constant,
    score_et,
    score_monte_carlo,
    score_upper_bound_lc,
    slab_constant,
)
from .protocol import AuditConfig, AuditReport, DataScientist, Decision, Query, Response, Transcript, run_session
from .verification import (
    DishonestDataScientist,
    PostFlagPolicy,
    Status,
    Verdict,
    verify_anchor_coverage,
    verify_anchor_precision,
    verify_counterfactual,
)
from .version_space import Ellipsoid, LabeledSet, cut_update, estimate_ellipsoid, synthesize_query

__version__ = "0.1.0"
