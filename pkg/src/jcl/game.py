"""Quitting games played without any trusted randomness device.

A quitting game gives every player some continue actions and one quit
action; the first quit freezes the game at that stage's payoff.  The
reference equilibria here designate, each block, at most one player
who then quits with a small probability.  The designation is a public
lottery, and instead of a trusted coordinator it is run through the
bounded two-device lottery: the letter streams are the binarized
continue actions of the first two players, so the randomness rides on
actions the players were going to play anyway.

A profile is certified empirically: estimate the payoff vector, then
try a finite family of deviations per player and bound the best gain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .adversaries import AdversarySpec, Constant, Honest, Stall
from .core import (
    BinaryCoinPair,
    BinaryPartition,
    OutcomeSet,
    ProbabilityVector,
    substream,
)
from .strong import CalibrationResult, calibrate_C, run_strong, simulate_strong

QUIT = "quit"       # reserved quit-action label, distinct from continue actions
NOBODY = "0"        # designation label for blocks where nobody may quit


class QuittingGame:
    """Players, per-player continue actions, and a total payoff map.

    ``payoffs`` maps every full action profile (tuple of one action
    per player in player order, each a continue action or QUIT) to a
    payoff vector in [0,1]^I.
    """

    def __init__(
        self,
        players: tuple[str, ...] | list[str],
        continue_actions: dict[str, OutcomeSet],
        payoffs: dict[tuple[str, ...], np.ndarray],
    ):
        players = tuple(players)
        if not players:
            raise ValueError("need at least one player")
        if len(set(players)) != len(players):
            raise ValueError("player names must be distinct")
        if NOBODY in players:
            raise ValueError(f"player name {NOBODY!r} is reserved for the idle designation")
        if set(continue_actions) != set(players):
            raise ValueError("continue_actions must cover exactly the players")
        for p in players:
            acts = continue_actions[p]
            if not isinstance(acts, OutcomeSet):
                raise TypeError(f"continue actions of {p} must be an OutcomeSet")
            if QUIT in acts.labels:
                raise ValueError(f"{QUIT!r} is reserved and cannot be a continue action of {p}")
        self.players = players
        self.continue_actions = dict(continue_actions)
        self._spaces = {
            p: tuple(continue_actions[p].labels) + (QUIT,) for p in players
        }
        table: dict[tuple[str, ...], np.ndarray] = {}
        expected = 1
        for p in players:
            expected *= len(self._spaces[p])
        if len(payoffs) != expected:
            raise ValueError(
                f"payoff map must be total: expected {expected} profiles, got {len(payoffs)}"
            )
        for profile, u in payoffs.items():
            profile = tuple(profile)
            for p, a in zip(players, profile):
                if a not in self._spaces[p]:
                    raise ValueError(f"profile {profile} uses unknown action {a!r} for {p}")
            u = np.asarray(u, dtype=np.float64)
            if u.shape != (len(players),):
                raise ValueError(f"payoff vector for {profile} has wrong length")
            if np.any(u < 0.0) or np.any(u > 1.0):
                raise ValueError(f"payoffs must lie in [0,1], got {u} at {profile}")
            table[profile] = u
        if len(table) != expected:
            raise ValueError("duplicate profiles in payoff map")
        self.payoffs = table
        self._tensor: np.ndarray | None = None

    def action_space(self, player: str) -> tuple[str, ...]:
        """Continue actions in canonical order, then QUIT."""
        return self._spaces[player]

    def action_index(self, player: str, action: str) -> int:
        return self._spaces[player].index(action)

    def payoff(self, profile: dict[str, str] | tuple[str, ...]) -> np.ndarray:
        if isinstance(profile, dict):
            profile = tuple(profile[p] for p in self.players)
        return self.payoffs[tuple(profile)].copy()

    @property
    def payoff_tensor(self) -> np.ndarray:
        """Payoffs as an array indexed by per-player action indices."""
        if self._tensor is None:
            shape = tuple(len(self._spaces[p]) for p in self.players) + (len(self.players),)
            t = np.empty(shape)
            for profile, u in self.payoffs.items():
                idx = tuple(self.action_index(p, a) for p, a in zip(self.players, profile))
                t[idx] = u
            t.setflags(write=False)
            self._tensor = t
        return self._tensor

    def expected_payoff(self, behavior: dict[str, ProbabilityVector | str]) -> np.ndarray:
        """Exact E[u] when each player mixes (or fixes) independently.

        ``behavior[p]`` is either a ProbabilityVector over p's continue
        actions or a single fixed action label (QUIT allowed).
        """
        choices = []
        for p in self.players:
            b = behavior[p]
            if isinstance(b, str):
                if b not in self._spaces[p]:
                    raise ValueError(f"unknown action {b!r} for {p}")
                choices.append(((b, 1.0),))
            else:
                if b.outcomes.labels != self.continue_actions[p].labels:
                    raise ValueError(f"mixing of {p} must be over their continue actions")
                choices.append(tuple(zip(b.outcomes.labels, b.mass)))
        total = np.zeros(len(self.players))
        for combo in itertools.product(*choices):
            prob = 1.0
            for _, q in combo:
                prob *= q
            if prob == 0.0:
                continue
            total += prob * self.payoffs[tuple(a for a, _ in combo)]
        return total

    def continue_value(self, x: dict[str, ProbabilityVector]) -> np.ndarray:
        """Exact stage payoff when everyone mixes over continue actions."""
        return self.expected_payoff({p: x[p] for p in self.players})

    def quit_value(self, player: str, x: dict[str, ProbabilityVector]) -> np.ndarray:
        """Exact payoff when ``player`` quits alone against mixing x."""
        behavior: dict[str, ProbabilityVector | str] = {p: x[p] for p in self.players}
        behavior[player] = QUIT
        return self.expected_payoff(behavior)

    @classmethod
    def from_dict(cls, d: dict) -> "QuittingGame":
        unknown = set(d) - {"players", "continue_actions", "payoffs"}
        if unknown:
            raise ValueError(f"unknown game keys: {sorted(unknown)}")
        players = tuple(d["players"])
        actions = {p: OutcomeSet(d["continue_actions"][p]) for p in players}
        payoffs: dict[tuple[str, ...], np.ndarray] = {}
        for entry in d["payoffs"]:
            unknown = set(entry) - {"profile", "u"}
            if unknown:
                raise ValueError(f"unknown payoff entry keys: {sorted(unknown)}")
            profile = tuple(entry["profile"][p] for p in players)
            payoffs[profile] = np.asarray(entry["u"], dtype=np.float64)
        return cls(players, actions, payoffs)

    def to_dict(self) -> dict:
        return {
            "players": list(self.players),
            "continue_actions": {p: list(self.continue_actions[p].labels) for p in self.players},
            "payoffs": [
                {"profile": dict(zip(self.players, prof)), "u": [float(v) for v in u]}
                for prof, u in sorted(self.payoffs.items())
            ],
        }


class DesignationRule(Protocol):
    """Per-block distribution over who may quit (players plus NOBODY)."""

    def probs(self, t: int) -> ProbabilityVector: ...


@dataclass(frozen=True)
class StationaryDesignation:
    distribution: ProbabilityVector

    def probs(self, t: int) -> ProbabilityVector:
        return self.distribution


@dataclass(frozen=True)
class CyclicDesignation:
    """Deterministic rotation through a fixed order of labels."""

    outcomes: OutcomeSet
    order: tuple[str, ...]

    def __post_init__(self):
        if not self.order:
            raise ValueError("cyclic order must be nonempty")
        for label in self.order:
            if label not in self.outcomes:
                raise ValueError(f"cyclic order label {label!r} not in the designation set")

    def probs(self, t: int) -> ProbabilityVector:
        return ProbabilityVector.dirac(self.outcomes, self.order[t % len(self.order)])


EtaRule = float | Callable[[int, str], float]


def _eta_value(eta: EtaRule, t: int, player: str) -> float:
    v = float(eta) if not callable(eta) else float(eta(t, player))
    if not 0.0 <= v < 1.0:
        raise ValueError(f"quit probability must be in [0,1), got {v} at block {t}")
    return v


@dataclass(frozen=True)
class SunspotProfile:
    """Reference equilibrium data: mixing, designation, quit rate, target.

    ``x`` maps each player to a mixing over their continue actions;
    ``designation`` emits a per-block distribution over players plus
    NOBODY; ``eta`` is the designated player's quit probability, a
    constant or a (block, player) function; ``target_payoff`` is the
    reference payoff vector the profile is supposed to achieve.
    """

    x: dict[str, ProbabilityVector]
    designation: DesignationRule
    eta: EtaRule
    target_payoff: np.ndarray | None = None


def perturb_pure(x_i: ProbabilityVector, epsilon: float) -> ProbabilityVector:
    """Make a pure mixing usable as a lottery letter source.

    A pure action cannot carry randomness, so mass ``epsilon`` is
    moved to the cyclically next continue action; non-pure input is
    returned unchanged.  Needs at least two continue actions.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0,1), got {epsilon}")
    if x_i.outcomes.size < 2:
        raise ValueError("cannot perturb a single-action mixing; need two continue actions")
    if not x_i.is_dirac:
        return x_i
    k = int(np.argmax(x_i.mass))
    mass = x_i.mass.copy()
    mass[k] -= epsilon
    mass[(k + 1) % x_i.outcomes.size] += epsilon
    return ProbabilityVector(x_i.outcomes, mass)


def horizon_T(
    sunspot: SunspotProfile,
    epsilon: float,
    *,
    method: str = "auto",
    seed: int = 0,
    samples: int = 4000,
    t_max: int = 200_000,
) -> int:
    """Number of blocks after which unfinished play is epsilon-rare.

    The criterion is that the survival product of (1 - eta^t) over
    designated blocks has probability below epsilon of still exceeding
    epsilon at T.  Constant eta with a structurally known designation
    rate rho uses the closed form ceil(ln eps / (rho ln(1-eta)));
    otherwise T is found by Monte Carlo over the designation chain
    with a 99% one-sided confidence margin.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0,1), got {epsilon}")
    if method not in ("auto", "closed_form", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    eta = sunspot.eta
    constant = not callable(eta)
    if constant and float(eta) <= 0.0:
        raise ValueError("eta is 0: the profile never terminates, no finite horizon exists")

    if method in ("auto", "closed_form"):
        rho = _designation_rate(sunspot.designation)
        if constant and rho is not None:
            if rho <= 0.0:
                raise ValueError("designation never names a player; no finite horizon exists")
            return math.ceil(math.log(epsilon) / (rho * math.log(1.0 - float(eta))))
        if method == "closed_form":
            raise ValueError(
                "closed form needs constant eta and a stationary or cyclic designation rule"
            )

    rng = substream(seed, "horizon")
    margin = math.sqrt(math.log(1.0 / 0.01) / (2.0 * samples))
    if epsilon <= margin:
        raise ValueError(
            f"{samples} samples cannot certify epsilon={epsilon}: margin {margin:.4f} too wide"
        )
    log_eps = math.log(epsilon)
    stop_at = np.full(samples, -1, dtype=np.int64)
    for i in range(samples):
        acc = 0.0
        for t in range(t_max):
            nu = sunspot.designation.probs(t)
            designee = nu.outcomes.labels[
                int(np.searchsorted(np.cumsum(nu.mass), rng.random(), side="right"))
            ]
            if designee != NOBODY:
                e = _eta_value(eta, t, designee)
                if e > 0.0:
                    acc += math.log1p(-e)
            if acc <= log_eps:
                stop_at[i] = t + 1
                break
        if stop_at[i] < 0:
            raise RuntimeError(
                f"survival product still above epsilon after {t_max} blocks; "
                "the profile may effectively never terminate"
            )
    allowed = math.ceil((epsilon - margin) * samples) - 1
    order = np.sort(stop_at)[::-1]
    return int(order[allowed])


def _designation_rate(rule: DesignationRule) -> float | None:
    """Average per-block probability that someone is designated, when
    the rule's structure makes that a known constant."""
    if isinstance(rule, StationaryDesignation):
        return 1.0 - rule.distribution.mass_of(NOBODY) if NOBODY in rule.distribution.outcomes else 1.0
    if isinstance(rule, CyclicDesignation):
        named = sum(1 for label in rule.order if label != NOBODY)
        return named / len(rule.order)
    return None


@dataclass(frozen=True)
class BlockProfile:
    """The deployable strategy profile: lottery blocks plus quit stages.

    Each block runs one bounded lottery over players plus NOBODY with
    the block's designation distribution as target; everyone plays the
    perturbed mixing x' throughout, and the first two players' realized
    continue actions double as the lottery letters.  At the block's
    final stage the designated player (if any) quits with probability
    eta.
    """

    game: QuittingGame
    sunspot: SunspotProfile
    epsilon: float
    T: int
    eps_block: float
    x_prime: dict[str, ProbabilityVector]
    partitions: dict[str, BinaryPartition]
    coins: BinaryCoinPair
    lottery_outcomes: OutcomeSet
    C: float
    calibration: CalibrationResult | None = None

    @property
    def device_players(self) -> tuple[str, str]:
        return self.game.players[0], self.game.players[1]


def build_block_profile(
    game: QuittingGame,
    sunspot: SunspotProfile,
    epsilon: float,
    *,
    C: float | None = None,
    seed: int = 0,
    runs_per_probe: int = 20_000,
    max_doublings: int = 12,
    eps_block_floor: float = 0.02,
) -> BlockProfile:
    """Assemble the block profile and calibrate its lottery threshold.

    The per-block lottery accuracy target is epsilon / T, floored at
    ``eps_block_floor``: desk-scale calibration cannot resolve targets
    far below the sampling noise of the probes, and the payoff and
    deviation gates downstream are what actually certify the profile.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0,1), got {epsilon}")
    for p in game.players[:2]:
        if game.continue_actions[p].size < 2:
            raise ValueError(
                f"player {p} has only one continue action; the lottery needs "
                "two players with at least two continue actions"
            )
    if set(sunspot.x) != set(game.players):
        raise ValueError("sunspot mixing must cover exactly the players")
    for p in game.players:
        if sunspot.x[p].outcomes.labels != game.continue_actions[p].labels:
            raise ValueError(f"mixing of {p} is not over their continue actions")
    if not callable(sunspot.eta):
        e = float(sunspot.eta)
        if not 0.0 < e < epsilon:
            raise ValueError(f"constant eta must be in (0, epsilon), got {e}")

    expected_labels = game.players + (NOBODY,)
    nu0 = sunspot.designation.probs(0)
    if nu0.outcomes.labels != expected_labels:
        raise ValueError(
            f"designation must be over {expected_labels} in that order, got {nu0.outcomes.labels}"
        )

    x_prime = dict(sunspot.x)
    for p in game.players[:2]:
        x_prime[p] = perturb_pure(sunspot.x[p], epsilon)

    T = horizon_T(sunspot, epsilon, seed=seed)
    eps_block = max(epsilon / T, eps_block_floor)

    partitions: dict[str, BinaryPartition] = {}
    p_alpha: list[float] = []
    for p in game.players[:2]:
        xp = x_prime[p]
        top = xp.outcomes.labels[int(np.argmax(xp.mass))]
        partitions[p] = BinaryPartition(xp.outcomes, frozenset({top}))
        p_alpha.append(float(np.max(xp.mass)))
    coins = BinaryCoinPair(p_alpha[0], p_alpha[1])

    outcomes = OutcomeSet(expected_labels)
    calibration = None
    if C is None:
        if nu0.is_dirac:
            # a deterministic designation needs no lottery accuracy
            C = 4.0 / eps_block**2
        else:
            calibration = calibrate_C(
                coins, nu0, eps_block,
                seed=seed, runs_per_probe=runs_per_probe, max_doublings=max_doublings,
            )
            if not calibration.accepted:
                raise RuntimeError(
                    "lottery calibration exhausted its doubling schedule at "
                    f"eps_block={eps_block}; smallest failing report attached: "
                    f"{[ (p.adversary, p.device, round(p.linf, 4)) for p in calibration.probes[-4:] ]}"
                )
            C = calibration.C
    if C is None or C <= 0:
        raise ValueError("no positive lottery threshold C available")

    return BlockProfile(
        game=game,
        sunspot=sunspot,
        epsilon=epsilon,
        T=T,
        eps_block=eps_block,
        x_prime=x_prime,
        partitions=partitions,
        coins=coins,
        lottery_outcomes=outcomes,
        C=float(C),
        calibration=calibration,
    )


# deviation family


@dataclass(frozen=True)
class QuitAtBlock:
    """Conform until block k (1-based), then quit at its first stage."""

    block: int

    def __post_init__(self):
        if self.block < 1:
            raise ValueError(f"block index is 1-based, got {self.block}")

    @property
    def name(self) -> str:
        return f"quit-at-block:{self.block}"


@dataclass(frozen=True)
class ConstantContinue:
    """Replace the mixing with one fixed continue action, forever."""

    action: str

    @property
    def name(self) -> str:
        return f"constant-continue:{self.action}"


@dataclass(frozen=True)
class StallLottery:
    """Play lottery letters that slow the variance clock."""

    @property
    def name(self) -> str:
        return "stall-lottery"


Deviation = QuitAtBlock | ConstantContinue | StallLottery


def quit_immediately() -> QuitAtBlock:
    return QuitAtBlock(1)


def parse_deviation(name: str) -> Deviation:
    if name == "quit-immediately":
        return QuitAtBlock(1)
    if name == "stall-lottery":
        return StallLottery()
    kind, sep, arg = name.partition(":")
    if sep and kind == "quit-at-block":
        return QuitAtBlock(int(arg))
    if sep and kind == "constant-continue":
        return ConstantContinue(arg)
    raise ValueError(
        f"unknown deviation {name!r}; expected 'quit-at-block:<k>', "
        "'constant-continue:<action>', 'quit-immediately', or 'stall-lottery'"
    )


@dataclass(frozen=True)
class StationaryProfile:
    """Everyone repeats one fixed mixed action over their full space."""

    game: QuittingGame
    actions: dict[str, ProbabilityVector]

    def __post_init__(self):
        for p in self.game.players:
            pv = self.actions[p]
            if pv.outcomes.labels != self.game.action_space(p):
                raise ValueError(
                    f"stationary mixing of {p} must be over continue actions plus {QUIT!r}"
                )


@dataclass(frozen=True)
class PlayResult:
    absorbed: bool
    stage: int | None           # 1-based stage of the first quit
    block: int | None           # 1-based block, block profiles only
    actions: dict[str, str] | None
    payoff: np.ndarray


def _sample_label(pv: ProbabilityVector, rng: np.random.Generator) -> str:
    i = int(np.searchsorted(np.cumsum(pv.mass), rng.random(), side="right"))
    return pv.outcomes.labels[min(i, pv.outcomes.size - 1)]


def _lottery_specs(
    profile: BlockProfile,
    deviator: tuple[str, Deviation] | None,
) -> tuple[AdversarySpec | None, int]:
    """Adversary spec and device slot a deviation induces on the lottery."""
    if deviator is None:
        return None, 1
    player, dev = deviator
    if player not in profile.device_players:
        return None, 1
    device = 1 if player == profile.device_players[0] else 2
    if isinstance(dev, StallLottery):
        return Stall(), device
    if isinstance(dev, ConstantContinue):
        letter = profile.partitions[player].letter_of(dev.action)
        return Constant(letter), device
    return None, device


def play(
    profile: BlockProfile | StationaryProfile,
    deviator: tuple[str, Deviation] | None = None,
    *,
    seed: int = 0,
    horizon_stages: int = 10_000,
    context: tuple = (),
) -> PlayResult:
    """Play one full game run stage by stage.

    For a block profile the horizon is its T blocks; for a stationary
    profile ``horizon_stages`` caps the run.  A non-absorbed run's
    payoff is the exact expected stage payoff of the continuing play,
    which is what its running average converges to.
    """
    if isinstance(profile, StationaryProfile):
        return _play_stationary(profile, seed, horizon_stages, context)
    game = profile.game
    if deviator is not None:
        _validate_deviator(profile, deviator)
    harness = substream(seed, *context, "game")
    spec, spec_device = _lottery_specs(profile, deviator)
    s1 = spec if spec is not None and spec_device == 1 else None
    s2 = spec if spec is not None and spec_device == 2 else None
    stage = 0
    for t in range(profile.T):
        nu_t = profile.sunspot.designation.probs(t)
        if nu_t.outcomes.labels != profile.lottery_outcomes.labels:
            raise ValueError(f"designation at block {t} switched outcome sets")

        if deviator is not None and isinstance(deviator[1], QuitAtBlock) \
                and deviator[1].block == t + 1:
            actions = _absorption_actions(profile, deviator[0], deviator, harness)
            return PlayResult(True, stage + 1, t + 1, actions, game.payoff(actions))

        lottery = run_strong(
            profile.coins, nu_t, profile.C, s1, s2,
            seed=seed, record=False, context=(*context, "block", t),
        )
        stage += lottery.stages
        designee = lottery.outcome
        quit_now = False
        if designee != NOBODY:
            e = _eta_value(profile.sunspot.eta, t, designee)
            quit_now = harness.random() < e
        stage += 1
        if quit_now:
            actions = _absorption_actions(profile, designee, deviator, harness)
            return PlayResult(True, stage, t + 1, actions, game.payoff(actions))
    payoff = _continue_payoff(profile, deviator)
    return PlayResult(False, None, None, None, payoff)


def _validate_deviator(profile: BlockProfile, deviator: tuple[str, Deviation]) -> None:
    player, dev = deviator
    game = profile.game
    if player not in game.players:
        raise ValueError(f"unknown deviating player {player!r}")
    if isinstance(dev, QuitAtBlock) and dev.block > profile.T:
        raise ValueError(f"quit block {dev.block} exceeds the horizon T={profile.T}")
    if isinstance(dev, ConstantContinue) and dev.action not in game.continue_actions[player]:
        raise ValueError(f"{dev.action!r} is not a continue action of {player}")
    if isinstance(dev, StallLottery) and player not in profile.device_players:
        raise ValueError(
            f"{player} carries no lottery letters; stall-lottery applies only to "
            f"players {profile.device_players}"
        )


def _absorption_actions(
    profile: BlockProfile,
    quitter: str,
    deviator: tuple[str, Deviation] | None,
    rng: np.random.Generator,
) -> dict[str, str]:
    actions: dict[str, str] = {}
    for p in profile.game.players:
        if p == quitter:
            actions[p] = QUIT
        elif deviator is not None and p == deviator[0] \
                and isinstance(deviator[1], ConstantContinue):
            actions[p] = deviator[1].action
        else:
            actions[p] = _sample_label(profile.x_prime[p], rng)
    return actions


def _continue_payoff(profile: BlockProfile, deviator: tuple[str, Deviation] | None) -> np.ndarray:
    behavior: dict[str, ProbabilityVector | str] = {
        p: profile.x_prime[p] for p in profile.game.players
    }
    if deviator is not None and isinstance(deviator[1], ConstantContinue):
        behavior[deviator[0]] = deviator[1].action
    return profile.game.expected_payoff(behavior)


def _play_stationary(
    profile: StationaryProfile,
    seed: int,
    horizon_stages: int,
    context: tuple,
) -> PlayResult:
    if horizon_stages < 1:
        raise ValueError(f"horizon_stages must be positive, got {horizon_stages}")
    game = profile.game
    rng = substream(seed, *context, "game")
    for stage in range(1, horizon_stages + 1):
        actions = {p: _sample_label(profile.actions[p], rng) for p in game.players}
        if any(a == QUIT for a in actions.values()):
            return PlayResult(True, stage, None, actions, game.payoff(actions))
    # run kept continuing: exact expected stage payoff of the continue part
    behavior: dict[str, ProbabilityVector | str] = {}
    for p in game.players:
        pv = profile.actions[p]
        cont = pv.mass[:-1]
        total = float(cont.sum())
        if total <= 0.0:
            raise ValueError(f"{p} always quits; a non-absorbed run cannot occur")
        behavior[p] = ProbabilityVector(game.continue_actions[p], cont / total)
    return PlayResult(False, None, None, None, game.expected_payoff(behavior))


@dataclass(frozen=True)
class BlockSimResult:
    """Vector outcome of many block-profile runs."""

    players: tuple[str, ...]
    T: int
    block: np.ndarray           # int64, 1-based absorption block, -1 if none
    quitter: np.ndarray         # int64 player index, -1 if none
    payoff: np.ndarray          # (runs, |I|)
    block_outcomes: np.ndarray | None = None    # (runs, T) lottery cell per block

    @property
    def runs(self) -> int:
        return int(self.block.size)

    @property
    def absorbed_rate(self) -> float:
        return float(np.mean(self.block >= 0)) if self.runs else 0.0


def simulate_block_profile(
    profile: BlockProfile,
    runs: int,
    *,
    deviator: tuple[str, Deviation] | None = None,
    seed: int = 0,
    context: tuple = (),
    collect_blocks: bool = False,
) -> BlockSimResult:
    """Run many block-profile plays at once.

    Stage counts inside blocks do not affect payoffs, so only block
    granularity is tracked here; use :func:`play` for true per-stage
    runs.  Dirac designations skip the lottery since its outcome is
    forced regardless of letters.
    """
    if runs < 0:
        raise ValueError(f"runs must be nonnegative, got {runs}")
    game = profile.game
    if deviator is not None:
        _validate_deviator(profile, deviator)
    players = game.players
    n_players = len(players)
    harness = substream(seed, *context, "game")
    spec, spec_device = _lottery_specs(profile, deviator)

    block = np.full(runs, -1, dtype=np.int64)
    quitter = np.full(runs, -1, dtype=np.int64)
    payoff = np.zeros((runs, n_players))
    outcomes_log = np.full((runs, profile.T), -1, dtype=np.int16) if collect_blocks else None
    active = np.ones(runs, dtype=bool)
    nobody_idx = n_players

    for t in range(profile.T):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        nu_t = profile.sunspot.designation.probs(t)
        if nu_t.outcomes.labels != profile.lottery_outcomes.labels:
            raise ValueError(f"designation at block {t} switched outcome sets")

        if deviator is not None and isinstance(deviator[1], QuitAtBlock) \
                and deviator[1].block == t + 1:
            dev_idx = players.index(deviator[0])
            _absorb(profile, harness, payoff, idx, np.full(idx.size, dev_idx), deviator)
            block[idx] = t + 1
            quitter[idx] = dev_idx
            active[idx] = False
            break

        if nu_t.is_dirac:
            cell = int(np.argmax(nu_t.mass))
            outcome = np.full(idx.size, cell, dtype=np.int64)
        else:
            batch = simulate_strong(
                profile.coins, nu_t, profile.C, idx.size,
                adversary=spec, adversary_device=spec_device,
                seed=seed, context=(*context, "block", t),
            )
            outcome = batch.outcome_idx
        if outcomes_log is not None:
            outcomes_log[idx, t] = outcome.astype(np.int16)

        designated = outcome < nobody_idx
        if not np.any(designated):
            continue
        des_rows = idx[designated]
        des_who = outcome[designated]
        eta_by_player = np.array(
            [_eta_value(profile.sunspot.eta, t, p) for p in players]
        )
        u = harness.random(des_rows.size)
        quits = u < eta_by_player[des_who]
        if not np.any(quits):
            continue
        rows = des_rows[quits]
        who = des_who[quits]
        _absorb(profile, harness, payoff, rows, who, deviator)
        block[rows] = t + 1
        quitter[rows] = who
        active[rows] = False

    if np.any(active):
        payoff[active] = _continue_payoff(profile, deviator)

    return BlockSimResult(players, profile.T, block, quitter, payoff, outcomes_log)


def _absorb(
    profile: BlockProfile,
    rng: np.random.Generator,
    payoff: np.ndarray,
    rows: np.ndarray,
    quitter_idx: np.ndarray,
    deviator: tuple[str, Deviation] | None,
) -> None:
    """Fill realized absorption payoffs for the given runs."""
    game = profile.game
    players = game.players
    k = rows.size
    action_idx = np.empty((k, len(players)), dtype=np.int64)
    for j, p in enumerate(players):
        if deviator is not None and p == deviator[0] and isinstance(deviator[1], ConstantContinue):
            action_idx[:, j] = game.action_index(p, deviator[1].action)
            continue
        pv = profile.x_prime[p]
        cum = np.cumsum(pv.mass)
        draws = np.searchsorted(cum, rng.random(k), side="right")
        action_idx[:, j] = np.minimum(draws, pv.outcomes.size - 1)
    quit_pos = np.array([len(game.action_space(p)) - 1 for p in players], dtype=np.int64)
    action_idx[np.arange(k), quitter_idx] = quit_pos[quitter_idx]
    tensor = game.payoff_tensor
    payoff[rows] = tensor[tuple(action_idx[:, j] for j in range(len(players)))]


@dataclass(frozen=True)
class PayoffEstimate:
    mean: np.ndarray
    half_width: float
    n: int

    def as_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "ci_half_width": self.half_width,
            "n": self.n,
        }


def _ci_half_width(n: int) -> float:
    # per-coordinate 99% half-width used by every estimate in this module
    return 3.0 * math.sqrt(math.log(2.0 / 0.01) / (2.0 * n))


def estimate_payoff(
    profile: BlockProfile | StationaryProfile,
    n_runs: int,
    *,
    deviator: tuple[str, Deviation] | None = None,
    seed: int = 0,
    context: tuple = (),
) -> PayoffEstimate:
    """Monte Carlo payoff vector with a per-coordinate confidence bound."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be positive, got {n_runs}")
    if isinstance(profile, StationaryProfile):
        if deviator is not None:
            raise ValueError("deviations are defined for block profiles only")
        payoffs = _simulate_stationary(profile, n_runs, seed=seed, context=context)
        return PayoffEstimate(payoffs.mean(axis=0), _ci_half_width(n_runs), n_runs)
    sim = simulate_block_profile(profile, n_runs, deviator=deviator, seed=seed, context=context)
    return PayoffEstimate(sim.payoff.mean(axis=0), _ci_half_width(n_runs), n_runs)


def _simulate_stationary(
    profile: StationaryProfile,
    runs: int,
    *,
    seed: int = 0,
    context: tuple = (),
    horizon_stages: int = 10_000,
) -> np.ndarray:
    game = profile.game
    players = game.players
    rng = substream(seed, *context, "game")
    payoff = np.zeros((runs, len(players)))
    active = np.ones(runs, dtype=bool)
    quit_pos = {p: len(game.action_space(p)) - 1 for p in players}
    for _ in range(horizon_stages):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        action_idx = np.empty((idx.size, len(players)), dtype=np.int64)
        for j, p in enumerate(players):
            cum = np.cumsum(profile.actions[p].mass)
            draws = np.searchsorted(cum, rng.random(idx.size), side="right")
            action_idx[:, j] = np.minimum(draws, len(game.action_space(p)) - 1)
        quit_mask = np.zeros(idx.size, dtype=bool)
        for j, p in enumerate(players):
            quit_mask |= action_idx[:, j] == quit_pos[p]
        if np.any(quit_mask):
            rows = idx[quit_mask]
            sel = action_idx[quit_mask]
            tensor = game.payoff_tensor
            payoff[rows] = tensor[tuple(sel[:, j] for j in range(len(players)))]
            active[rows] = False
    if np.any(active):
        behavior: dict[str, ProbabilityVector | str] = {}
        for p in players:
            pv = profile.actions[p]
            cont = pv.mass[:-1]
            total = float(cont.sum())
            if total <= 0.0:
                raise ValueError(f"{p} always quits; a non-absorbed run cannot occur")
            behavior[p] = ProbabilityVector(game.continue_actions[p], cont / total)
        payoff[active] = game.expected_payoff(behavior)
    return payoff


@dataclass(frozen=True)
class DeviationEntry:
    name: str
    payoff: float               # deviator's own estimated payoff
    gain: float                 # payoff minus the on-path estimate
    ci: float                   # half-width budget for the gain

    def as_dict(self) -> dict:
        return {"name": self.name, "payoff": self.payoff, "gain": self.gain, "ci": self.ci}


@dataclass(frozen=True)
class DeviationReport:
    player: str
    on_path: float
    on_path_ci: float
    entries: list[DeviationEntry] = field(default_factory=list)

    @property
    def max_gain(self) -> float:
        return max((e.gain for e in self.entries), default=0.0)

    @property
    def worst(self) -> DeviationEntry | None:
        return max(self.entries, key=lambda e: e.gain, default=None)

    def as_dict(self) -> dict:
        return {
            "player": self.player,
            "on_path": self.on_path,
            "on_path_ci": self.on_path_ci,
            "max_gain": self.max_gain,
            "entries": [e.as_dict() for e in self.entries],
        }


def deviation_gain(
    profile: BlockProfile,
    player: str,
    n_runs: int,
    *,
    family: list[Deviation] | None = None,
    seed: int = 0,
    context: tuple = (),
) -> DeviationReport:
    """Best estimated gain for one player over a finite deviation family.

    The default family is quit-at-block-k for every k up to T (which
    subsumes quitting immediately), one constant-continue per continue
    action, and stall-lottery when the player carries lottery letters.
    All quit-at-block-k estimates reuse a single on-path simulation:
    play before block k is on-strategy, so a run absorbed before k
    keeps its realized payoff and any other run is scored with the
    exact expected payoff of quitting alone against x'.
    """
    game = profile.game
    if player not in game.players:
        raise ValueError(f"unknown player {player!r}")
    if n_runs < 1:
        raise ValueError(f"n_runs must be positive, got {n_runs}")
    pi = game.players.index(player)
    half = _ci_half_width(n_runs)

    if family is None:
        family = [QuitAtBlock(k) for k in range(1, profile.T + 1)]
        family += [ConstantContinue(a) for a in game.continue_actions[player].labels]
        if player in profile.device_players:
            family.append(StallLottery())

    on_sim = simulate_block_profile(
        profile, n_runs, seed=seed, context=(*context, "on-path"),
    )
    on_path = float(on_sim.payoff[:, pi].mean())
    quit_vec = float(game.quit_value(player, profile.x_prime)[pi])
    absorbed_before = on_sim.block  # -1 when never absorbed

    entries: list[DeviationEntry] = []
    sim_cache: dict[str, float] = {}
    for dev in family:
        if isinstance(dev, QuitAtBlock):
            keep = (absorbed_before >= 0) & (absorbed_before < dev.block)
            dev_payoff = np.where(keep, on_sim.payoff[:, pi], quit_vec)
            est = float(dev_payoff.mean())
            # same-path coupling: both estimates share the simulation
            entries.append(DeviationEntry(dev.name, est, est - on_path, 2.0 * half))
            continue
        if dev.name not in sim_cache:
            dev_sim = simulate_block_profile(
                profile, n_runs, deviator=(player, dev),
                seed=seed, context=(*context, dev.name),
            )
            sim_cache[dev.name] = float(dev_sim.payoff[:, pi].mean())
        est = sim_cache[dev.name]
        entries.append(DeviationEntry(dev.name, est, est - on_path, 2.0 * half))

    return DeviationReport(player, on_path, half, entries)


def oracle_payoff(profile: BlockProfile) -> np.ndarray:
    """Exact expected payoff of the block profile, assuming exact
    per-block lotteries.

    Walks the designation chain block by block: absorption at block t
    by player i has probability survive * nu_t(i) * eta_t(i), and each
    absorption pays the exact expected payoff of i quitting alone.
    The lottery approximation error is not modeled here; this is the
    reference the Monte Carlo estimate is compared against.
    """
    game = profile.game
    players = game.players
    gamma = np.zeros(len(players))
    survive = 1.0
    quit_vectors = {p: game.quit_value(p, profile.x_prime) for p in players}
    for t in range(profile.T):
        nu_t = profile.sunspot.designation.probs(t)
        p_absorb = 0.0
        for p in players:
            q = nu_t.mass_of(p) * _eta_value(profile.sunspot.eta, t, p)
            if q > 0.0:
                gamma += survive * q * quit_vectors[p]
                p_absorb += q
        survive *= 1.0 - p_absorb
    gamma += survive * _continue_payoff(profile, None)
    return gamma


def sunspot_from_dict(game: QuittingGame, d: dict) -> SunspotProfile:
    """Sunspot data from config JSON: mixing, designation, eta, target."""
    unknown = set(d) - {"x", "designation", "eta", "target_payoff"}
    if unknown:
        raise ValueError(f"unknown sunspot keys: {sorted(unknown)}")
    x: dict[str, ProbabilityVector] = {}
    for p in game.players:
        if p not in d["x"]:
            raise ValueError(f"sunspot mixing missing player {p}")
        weights = d["x"][p]
        acts = game.continue_actions[p]
        mass = [weights.get(a, 0.0) for a in acts.labels]
        extra = set(weights) - set(acts.labels)
        if extra:
            raise ValueError(f"mixing of {p} names unknown actions {sorted(extra)}")
        x[p] = ProbabilityVector(acts, mass)
    outcomes = OutcomeSet(game.players + (NOBODY,))
    des = d["designation"]
    kind = des.get("type")
    if kind == "stationary":
        probs = des.get("probs", {})
        extra = set(probs) - set(outcomes.labels)
        if extra:
            raise ValueError(f"designation names unknown labels {sorted(extra)}")
        pv = ProbabilityVector(outcomes, [probs.get(l, 0.0) for l in outcomes.labels])
        rule: DesignationRule = StationaryDesignation(pv)
    elif kind == "cyclic":
        rule = CyclicDesignation(outcomes, tuple(des.get("order", ())))
    else:
        raise ValueError(f"unknown designation type {kind!r}; expected 'stationary' or 'cyclic'")
    eta = d["eta"]
    if not isinstance(eta, (int, float)):
        raise ValueError("config eta must be a number")
    target = d.get("target_payoff")
    target_arr = None if target is None else np.asarray(target, dtype=np.float64)
    if target_arr is not None and target_arr.shape != (len(game.players),):
        raise ValueError("target_payoff must list one value per player")
    return SunspotProfile(x=x, designation=rule, eta=float(eta), target_payoff=target_arr)
