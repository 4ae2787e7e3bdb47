"""Rough paths on free nilpotent groups: group algebra, path tools, translations,
subelliptic diffusions, RDE solving and bracket-rank checks."""

__version__ = "0.1.0"

from .nilpotent_group import (
    DimensionMismatchError,
    GroupElement,
    LieElement,
    NotGrouplikeError,
    TensorSeries,
    chen_mul,
    dilate,
    dist,
    exp_lie,
    exp_tensor,
    hom_norm,
    inverse,
    is_grouplike,
    log_group,
    log_tensor,
    witt_dim,
)
from .path_tools import (
    GroupPath,
    LinearPath,
    Relation,
    bound_dyadic,
    bound_global,
    bound_unifHol,
    dist_alpha_holder,
    holder_stopping_times,
    lift_signature,
    pvar_norm,
    restricted_holder,
)
from .translation import SobolevPath, translate, w12_norm
from .vector_fields import PolyVectorField, VectorFieldSystem, lie_bracket
from .rde_solver import solve, step_euler
from .hormander import build_bracket_table, check_condition_34, dim_lie_W, sample_orbit, span_dim_at
from .markov_sampler import (
    SamplerConfig,
    SubellipticField,
    estimate_ball_return,
    estimate_tail_sup,
    generator_moments,
    sample_path,
)
