"""Identification and analysis of interactive games from recorded histories."""

from .coupling import (ChannelCoupling, CouplingForm, additive, additive_channel,
                       multiplicative_channel, simulate_coupled, state_scaled_channel)
from .detection import (Candidate, CandidateRanking, DetectionVerdict, SelectionConfig,
                        analyze_level, default_threshold, detect_hidden_inputs, fit_dynamics,
                        local_optimality_score, select_interactive_model)
from .dynamics import (BasisTerm, ControlSignal, DynamicsModel, Expansion, TimeGrid, Trajectory,
                       estimate_derivatives, evaluate_rhs, integrate, monomial_dictionary)
from .epsilon import (DesireMap, EpsilonRepresentation, UnravelLevel, extract_desires,
                      fit_desire_map, lift_epsilon, recover_epsilon, unravel_recursive)
from .errors import (BadConfig, DegenerateRegression, DimensionMismatch, EmptyCandidateSet,
                     EmptyCodebook, IGameError, InsufficientData, LengthMismatch, MissingInput,
                     MixedRepresentation, NonFiniteState, NonHermitianSpec, SingularCoupling)
from .filters import FiltrationSpec, Primitive, apply_filtration, identity_filtration
from .goals import GoalFunctional, evaluate_goal, linear_goal, quadratic_goal, tracking_goal
from .quantum import (FilterBasis, FockSpace, HamiltonianSpec, QuantumOperator, QuantumState,
                      build_hamiltonian, evolve_slow, ladder_operators, number_operators,
                      quick_time_coefficients)
from .scenarios import Scenario, builtin_catalog, generate, get_scenario, two_stage_fixture
from .sdpair import (HiddenParameterMap, PictureModel, SDPair, add_agent, desire_controls,
                     sd_consistency, sd_transform)
from .verbalization import (Partition, RecursionModel, SegmentFunctionalSpec, WordSequence,
                            check_synlinguism, compute_words, fit_recursion, segment_trajectory)

__version__ = "0.1.0"
