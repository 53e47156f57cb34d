"""Jointly controlled lotteries: mechanisms, attacks, and verification.

Two players who distrust each other can still run a fair public
lottery using nothing but their own mixed actions.  This package
implements a bounded mechanism whose stopping time has a hard cap, an
unbounded mechanism whose per-round fairness survives any deviation by
one player, fault detection for the latter, and the block construction
that turns these lotteries into near-equilibrium play in quitting
games.  Everything is paired with adversary strategies and statistical
acceptance checks, wired into the ``jcl`` command line tool.
"""

from .adversaries import (
    AdversarySpec,
    Constant,
    Honest,
    Push,
    Stall,
    constant_adversary,
    default_suite,
    greedy_push_adversary,
    parse_adversary,
    stalling_adversary,
)
from .core import (
    ALPHA,
    BETA,
    BinaryCoinPair,
    BinaryPartition,
    HonestStrategy,
    OutcomeSet,
    ProbabilityVector,
    StageContext,
    Transcript,
    binarize,
    device_streams,
    letter_from_name,
    substream,
)
from .game import (
    NOBODY,
    QUIT,
    BlockProfile,
    BlockSimResult,
    ConstantContinue,
    CyclicDesignation,
    DesignationRule,
    Deviation,
    DeviationEntry,
    DeviationReport,
    PayoffEstimate,
    PlayResult,
    QuitAtBlock,
    QuittingGame,
    StallLottery,
    StationaryDesignation,
    StationaryProfile,
    SunspotProfile,
    build_block_profile,
    deviation_gain,
    estimate_payoff,
    horizon_T,
    oracle_payoff,
    parse_deviation,
    perturb_pure,
    play,
    quit_immediately,
    simulate_block_profile,
    sunspot_from_dict,
)
from .normal import normal_cdf, normal_quantile
from .stats import (
    EmpiricalDistribution,
    chi_square,
    hoeffding_margin,
    linf_distance,
    one_sided_excess,
)
from .strong import (
    CalibrationProbe,
    CalibrationResult,
    IntervalPartition,
    ScoreTable,
    StrongBatch,
    StrongRunResult,
    bind_strong,
    build_partition,
    calibrate_C,
    run_strong,
    score,
    simulate_strong,
    stage_bound,
)
from .weak import (
    DetectionVerdict,
    SuccessorMap,
    WeakBatch,
    WeakRunResult,
    bind_weak,
    build_successor,
    default_max_stages,
    detect_fault,
    run_weak,
    simulate_weak,
    step,
)

__version__ = "0.1.0"
