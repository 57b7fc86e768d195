"""Fock-space operator algebra and MCMC for Markov random fields on multiply occupied histograms."""

__version__ = "0.1.0"

from .algebra import (
    Factor,
    Kind,
    MixedState,
    OperatorExpr,
    Site,
    apply_annihilate,
    apply_create,
    apply_expr,
    commutator,
    inner_product,
    normal_order,
    number_operator,
    parse_expr,
    render_expr,
)
from .diagrams import InteractionWord, evaluate_word, expand_power, render_words
from .errors import (
    CapacityError,
    ConvergenceError,
    FockMrfError,
    ModeError,
    ModelError,
    ReducibilityError,
    ValidationError,
)
from .exact import (
    Distribution,
    StateSpace,
    TransitionKernel,
    build_kernel,
    check_equilibrium_multinomial,
    enumerate_states,
    expected_statistic,
    stationary_distribution,
    total_variation,
)
from .model import MrfSpec, creation_weights, hce_joint_weight, load_spec, load_spec_file
from .sampler import ChainConfig, ChainTrace, empirical_distribution, run, step
from .update import UpdateOperator, build_mrf_H, build_single_node_H, verify_number_conservation
