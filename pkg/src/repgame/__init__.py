"""Discounted repeated games with statistical enforcement of cooperation.

Library + CLI for simulating infinitely repeated games under imperfect
public monitoring, where cooperation is enforced by sequential statistical
tests (an anytime e-process variant and a batch frequency-test variant)
backed by grim punishment, together with the closed-form error, detection,
and payoff bounds that certify the resulting equilibria.
"""
from .bounds import (
    BatchSchedule,
    BoundParamError,
    BoundParams,
    anytime_tau_bound,
    batch_error_bounds,
    tuned_batch_params,
    zeta_bound,
)
from .game import (
    DegeneratePlayerError,
    GameError,
    MixedAction,
    MixedProfile,
    PayoffTarget,
    StageGame,
    best_response_gap,
    expected_utility,
    load_game,
    patience_thresholds,
    pure_action_payoffs,
    solve_bimatrix_nash,
    tv_ball_contains,
)
from .sequential import (
    BatchTestState,
    EProcessState,
    StalenessError,
    TestInputError,
    anytime_verdict,
    batch_test,
    batch_update,
    eprocess_update,
    laplace_estimate,
)
from .simulate import (
    EpisodeConfig,
    MonteCarloReport,
    Trajectory,
    discounted_payoffs,
    eprocess_exact_oracle,
    monte_carlo,
    run_episode,
    wilson_interval,
)
from .strategies import (
    BatchAdversarial,
    ConfigurationError,
    ModeError,
    OneShotDeviation,
    PublicHistory,
    SmallBall,
    Stationary,
    anytime_ttp_act,
    batch_ttp_act,
    grim_trigger_act,
    make_deviation,
)
from .experiment import (
    SpecError,
    build_config,
    emit_report,
    load_spec,
    run_experiment,
)

__version__ = "0.1.0"
