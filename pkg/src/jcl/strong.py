"""Bounded jointly controlled lottery driven by two biased coin devices.

Each stage both devices emit one letter.  A public score table turns
the pair into a zero-mean increment, a variance clock accumulates the
squared increments, and play stops the first stage the clock reaches
the budget ``C``.  The normalized running sum is then decoded into an
outcome through a quantile partition of the standard normal line.

Every table entry is bounded away from zero, so each stage moves the
clock forward by a guaranteed amount and the stage count is hard
capped no matter what either device does.  A single dishonest device
can neither stall the run nor shift any outcome probability by more
than an amount that vanishes as ``C`` grows.

Two execution paths share the same definitions: :func:`run_strong`
plays one run stage by stage and can record a transcript, while
:func:`simulate_strong` advances many runs at once in variable-size
blocks (pair counts via binomial chains, exact crossing stage via
hypergeometric bisection) and is exact in distribution, not an
approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversaries import AdversarySpec, Constant, Honest, Push, Stall
from .core import (
    ALPHA,
    BETA,
    BinaryCoinPair,
    DeviceStrategy,
    OutcomeSet,
    ProbabilityVector,
    StageContext,
    Transcript,
    device_streams,
    sample_stage,
)
from .normal import normal_quantile
from .stats import EmpiricalDistribution, hoeffding_margin, linf_distance

# Block cap: keeps binomial/hypergeometric parameters well inside the
# generator's supported range while still jumping millions of stages.
M_MAX = 1 << 24

# Aim points are clamped here; reachable normalized sums stay near
# [-1.2, 1.2], so +-40 is an effective infinity for the push rule.
_AIM_CLAMP = 40.0

# Pair order everywhere: index = 2*a1 + a2 over (aa, ab, ba, bb).
PAIRS = ((ALPHA, ALPHA), (ALPHA, BETA), (BETA, ALPHA), (BETA, BETA))


def _pair_probs(p1, p2):
    """Stack the four pair probabilities for scalar or array marginals."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    return np.stack([p1 * p2, p1 * (1.0 - p2), (1.0 - p1) * p2, (1.0 - p1) * (1.0 - p2)], axis=-1)


@dataclass(frozen=True)
class ScoreTable:
    """Zero-mean score table w(a1, a2) built from the two coin biases.

    Rows have mean zero under device 2's honest marginal and columns
    under device 1's, which is what makes the running sum a martingale
    whenever at least one device is honest.
    """

    coins: BinaryCoinPair
    values: np.ndarray  # shape (2, 2), w[a1, a2]

    @classmethod
    def from_coins(cls, coins: BinaryCoinPair) -> "ScoreTable":
        s1a, s1b = coins.prob(1, ALPHA), coins.prob(1, BETA)
        s2a, s2b = coins.prob(2, ALPHA), coins.prob(2, BETA)
        w = np.array(
            [
                [-s1b * s2b, +s1b * s2a],
                [+s1a * s2b, -s1a * s2a],
            ],
            dtype=np.float64,
        )
        w.setflags(write=False)
        table = cls(coins, w)
        table._check_zero_mean()
        return table

    def _check_zero_mean(self) -> None:
        s1 = np.array([self.coins.prob(1, ALPHA), self.coins.prob(1, BETA)])
        s2 = np.array([self.coins.prob(2, ALPHA), self.coins.prob(2, BETA)])
        rows = self.values @ s2
        cols = s1 @ self.values
        if np.max(np.abs(rows)) > 1e-12 or np.max(np.abs(cols)) > 1e-12:
            raise ValueError("score table lost the zero-mean property")

    def score(self, a1: int, a2: int) -> float:
        return float(self.values[a1, a2])

    @property
    def flat(self) -> np.ndarray:
        """Entries in pair order (aa, ab, ba, bb)."""
        return self.values.reshape(4)

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.values)))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def honest_second_moment(self) -> float:
        """E[w(A1, A2)^2] when both devices play their coins."""
        p = _pair_probs(self.coins.prob(1, ALPHA), self.coins.prob(2, ALPHA))
        return float(p @ (self.flat**2))

    def stage_cap(self, C: float) -> int:
        """Hard stage bound: every increment squares to at least min_abs^2."""
        return math.ceil(C / self.min_abs**2)

    def stall_letter(self, device: int) -> int:
        """Letter minimizing the clock's expected advance for ``device``."""
        other = 2 if device == 1 else 1
        marg = np.array([self.coins.prob(other, ALPHA), self.coins.prob(other, BETA)])
        w2 = self.values**2
        cond = w2 @ marg if device == 1 else marg @ w2
        return ALPHA if cond[ALPHA] <= cond[BETA] else BETA

    def rush_letter(self, device: int) -> int:
        """Letter maximizing the clock's expected advance for ``device``."""
        other = 2 if device == 1 else 1
        marg = np.array([self.coins.prob(other, ALPHA), self.coins.prob(other, BETA)])
        w2 = self.values**2
        cond = w2 @ marg if device == 1 else marg @ w2
        return ALPHA if cond[ALPHA] >= cond[BETA] else BETA

    def second_moment_given(self, device: int, letter: int) -> float:
        """E[w^2] when ``device`` plays ``letter`` and the other is honest."""
        other = 2 if device == 1 else 1
        marg = np.array([self.coins.prob(other, ALPHA), self.coins.prob(other, BETA)])
        w2 = self.values**2
        cond = w2 @ marg if device == 1 else marg @ w2
        return float(cond[letter])


def stage_bound(coins: BinaryCoinPair, C: float) -> int:
    """Published conservative stage bound ceil(C / c0^4).

    Each table entry is a product of two letter probabilities, so its
    magnitude is at least c0^2 and each squared increment at least
    c0^4.  The engine enforces the tighter ceil(C / min|w|^2) cap.
    """
    return math.ceil(C / coins.c0**4)


class IntervalPartition:
    """Quantile partition of the normal line matching a target vector.

    Cell ``j`` is the left-open right-closed interval (b[j], b[j+1]]
    with breakpoints at the normal quantiles of the cumulative target
    masses.  Zero-mass labels get empty cells.
    """

    def __init__(self, target: ProbabilityVector):
        self.target = target
        self.outcomes = target.outcomes
        cums = np.concatenate([[0.0], np.cumsum(target.mass)])
        cums[-1] = 1.0
        self.cums = cums
        self.breakpoints = np.array([normal_quantile(c) for c in cums])
        # Boundary membership: a sum landing exactly on an inner
        # breakpoint belongs to the cell on its left.
        self._inner = self.breakpoints[1:-1]

    def label_of(self, z: float) -> str:
        return self.outcomes.labels[self.index_of(z)]

    def index_of(self, z: float) -> int:
        return int(np.searchsorted(self._inner, z, side="left"))

    def indices_of(self, z: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._inner, z, side="left").astype(np.int64)

    def aim(self, index: int) -> float:
        """Interior aim point of a cell: quantile of its mid cumulative."""
        mid = 0.5 * (self.cums[index] + self.cums[index + 1])
        return normal_quantile(mid)


@dataclass
class _StrongView:
    """Mechanism state a strategy may read through ``StageContext.mech``."""

    C: float
    table: ScoreTable
    partition: IntervalPartition
    sum_y: float = 0.0
    sum_y2: float = 0.0


class BoundStrongAdversary:
    """One adversary spec bound to a device of the bounded lottery."""

    def __init__(
        self,
        spec: AdversarySpec,
        device: int,
        table: ScoreTable,
        partition: IntervalPartition,
        C: float,
    ):
        if device not in (1, 2):
            raise ValueError(f"device must be 1 or 2, got {device}")
        self.spec = spec
        self.device = device
        self.table = table
        self._honest_p = table.coins.prob(device, ALPHA)
        if isinstance(spec, Stall):
            self._fixed = table.stall_letter(device)
        elif isinstance(spec, Constant):
            self._fixed = spec.letter
        else:
            self._fixed = None
        if isinstance(spec, Push):
            (self.aim_sum, self._pos, self._neg, self._rush,
             self._review, self._reach) = _push_plan(table, partition, spec, device, C)
            self._finished = False
            self._letter = self._rush

    def prob_alpha(self, ctx: StageContext) -> float:
        spec = self.spec
        if isinstance(spec, Honest):
            return self._honest_p
        if self._fixed is not None:
            return 1.0 if self._fixed == ALPHA else 0.0
        # push: steer toward the aim while far, then race the clock so
        # the sum cannot diffuse back out of the target cell; state is
        # re-examined only at review stages and frozen in between
        if ctx.stage == 0:
            self._finished = False
        if not self._finished and ctx.stage % self._review == 0:
            d = self.aim_sum - ctx.mech.sum_y
            if abs(d) <= self._reach:
                self._finished = True
            else:
                self._letter = self._pos if d > 0 else self._neg
        if self._finished:
            return 1.0 if self._rush == ALPHA else 0.0
        return 1.0 if self._letter == ALPHA else 0.0


def _push_plan(
    table: ScoreTable,
    partition: "IntervalPartition",
    spec: Push,
    device: int,
    C: float,
) -> tuple[float, int, int, int, int, float]:
    """Frozen parameters of the push rule for one device and budget.

    The rule reviews its state every K stages and holds its letter in
    between, so any block inside one review window is exactly a run of
    i.i.d. letters.  K is about 1/32 of the expected honest run, and
    the finish radius is the diffusion scale of one window (at least
    one maximal score), past which further steering cannot help.
    """
    idx = partition.outcomes.index(spec.target)
    aim_z = min(_AIM_CLAMP, max(-_AIM_CLAMP, partition.aim(idx)))
    aim_sum = aim_z * math.sqrt(C)
    f_pos, f_neg = _far_letters(table, device)
    rush = table.rush_letter(device)
    window = max(1, round(C / table.honest_second_moment() / 32.0))
    reach = max(
        table.max_abs,
        math.sqrt(window * table.second_moment_given(device, rush)),
    )
    return aim_sum, f_pos, f_neg, rush, window, reach


def _far_letters(table: ScoreTable, device: int) -> tuple[int, int]:
    """Letters maximizing P(step > 0) resp. P(step < 0) for ``device``."""
    other = 2 if device == 1 else 1
    marg = np.array([table.coins.prob(other, ALPHA), table.coins.prob(other, BETA)])
    pos = np.zeros(2)
    for own in (ALPHA, BETA):
        for theirs in (ALPHA, BETA):
            w = table.values[own, theirs] if device == 1 else table.values[theirs, own]
            if w > 0:
                pos[own] += marg[theirs]
    f_pos = ALPHA if pos[ALPHA] >= pos[BETA] else BETA
    f_neg = ALPHA if 1.0 - pos[ALPHA] >= 1.0 - pos[BETA] else BETA
    return f_pos, f_neg


def bind_strong(
    spec: AdversarySpec | DeviceStrategy,
    device: int,
    table: ScoreTable,
    partition: IntervalPartition,
    C: float,
) -> DeviceStrategy:
    """Turn a spec into a per-stage strategy; pass strategies through."""
    if isinstance(spec, (Honest, Constant, Push, Stall)):
        return BoundStrongAdversary(spec, device, table, partition, C)
    if hasattr(spec, "prob_alpha"):
        return spec
    raise TypeError(f"not an adversary spec or device strategy: {spec!r}")


@dataclass(frozen=True)
class StrongRunResult:
    outcome: str
    outcome_index: int
    stages: int
    z: float
    sum_y: float
    sum_y2: float
    transcript: Transcript | None = None


def run_strong(
    coins: BinaryCoinPair,
    target: ProbabilityVector,
    C: float,
    s1: AdversarySpec | DeviceStrategy | None = None,
    s2: AdversarySpec | DeviceStrategy | None = None,
    *,
    seed: int = 0,
    record: bool = True,
    context: tuple = (),
) -> StrongRunResult:
    """Play one bounded lottery run stage by stage.

    ``s1``/``s2`` default to honest play.  The per-stage path exists
    for transcripts and for differential tests against the block
    engine; use :func:`simulate_strong` for anything statistical.
    """
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    table = ScoreTable.from_coins(coins)
    partition = IntervalPartition(target)
    st1 = bind_strong(s1 if s1 is not None else Honest(), 1, table, partition, C)
    st2 = bind_strong(s2 if s2 is not None else Honest(), 2, table, partition, C)
    rng1, rng2, _ = device_streams(seed, *context)
    view = _StrongView(C=C, table=table, partition=partition)
    letters1: list[int] = []
    letters2: list[int] = []
    # Two extra stages of slack: a run advancing at exactly the minimum
    # increment lands on the cap, and float summation order can shift
    # the crossing by a stage.
    cap = table.stage_cap(C) + 2
    stage = 0
    while view.sum_y2 < C:
        ctx1 = StageContext(1, stage, letters1, letters2, view)
        ctx2 = StageContext(2, stage, letters2, letters1, view)
        a1, a2 = sample_stage(st1, st2, ctx1, ctx2, rng1, rng2)
        letters1.append(a1)
        letters2.append(a2)
        y = table.score(a1, a2)
        view.sum_y += y
        view.sum_y2 += y * y
        stage += 1
        if stage > cap:
            raise AssertionError("variance clock failed to reach C within the hard cap")
    z = view.sum_y / math.sqrt(C)
    idx = partition.index_of(z)
    transcript = None
    if record:
        transcript = Transcript(
            stages=list(zip(letters1, letters2)),
            terminal=partition.outcomes.labels[idx],
        )
    return StrongRunResult(
        outcome=partition.outcomes.labels[idx],
        outcome_index=idx,
        stages=stage,
        z=z,
        sum_y=view.sum_y,
        sum_y2=view.sum_y2,
        transcript=transcript,
    )


@dataclass(frozen=True)
class StrongBatch:
    """Vector result of many bounded lottery runs."""

    outcomes: OutcomeSet
    C: float
    outcome_idx: np.ndarray  # int64, decoded cell per run
    stages: np.ndarray       # int64, stopping stage per run
    z: np.ndarray            # float64, normalized final sum
    sum_y: np.ndarray        # float64

    @property
    def runs(self) -> int:
        return int(self.outcome_idx.size)

    def empirical(self) -> EmpiricalDistribution:
        return EmpiricalDistribution.from_indices(self.outcomes, self.outcome_idx)


def _mhg_split(gen: np.random.Generator, counts: np.ndarray, m_lo: np.ndarray) -> np.ndarray:
    """Multivariate hypergeometric prefix split, vectorized over runs.

    Given per-run pair counts over a block (shape (k, 4)) this samples
    how many of each pair land in the first ``m_lo`` stages, which is
    exact because i.i.d. letters are exchangeable given their counts.
    """
    lo = np.zeros_like(counts)
    remaining = m_lo.astype(np.int64).copy()
    pool = counts.sum(axis=1)
    for j in range(3):
        good = counts[:, j]
        bad = pool - good
        need = remaining > 0
        # masked lanes get legal dummy parameters, result discarded
        ng = np.where(need, good, 1)
        nb = np.where(need, bad, 0)
        ns = np.where(need, remaining, 1)
        x = gen.hypergeometric(ng, nb, ns)
        x = np.where(need, x, 0)
        lo[:, j] = x
        remaining -= x
        pool -= good
    lo[:, 3] = remaining
    return lo


def _refine_crossings(
    harness: np.random.Generator,
    w: np.ndarray,
    w2: np.ndarray,
    C: float,
    sum_y: np.ndarray,
    sum_y2: np.ndarray,
    stages: np.ndarray,
    ridx: np.ndarray,
    counts: np.ndarray,
    m: np.ndarray,
) -> None:
    """Bisect crossing blocks down to the exact stopping stage.

    On entry each listed run's block of ``m`` stages is known to push
    the clock past ``C``.  Squared increments are positive, so the
    crossing half of every split is identified by its clock total
    alone; roughly log2(m) splits isolate the stopping stage.
    """
    live = np.ones(ridx.size, dtype=bool)
    while True:
        single = live & (m == 1)
        if np.any(single):
            rows = np.nonzero(single)[0]
            g = ridx[rows]
            sum_y[g] += counts[rows] @ w
            sum_y2[g] += counts[rows] @ w2
            stages[g] += 1
            live[rows] = False
        if not np.any(live):
            return
        rows = np.nonzero(live)[0]
        g = ridx[rows]
        m_lo = m[rows] >> 1
        lo = _mhg_split(harness, counts[rows], m_lo)
        y2_lo = lo @ w2
        in_lo = sum_y2[g] + y2_lo >= C
        a = rows[in_lo]
        counts[a] = lo[in_lo]
        m[a] = m_lo[in_lo]
        b = rows[~in_lo]
        gb = ridx[b]
        sum_y[gb] += lo[~in_lo] @ w
        sum_y2[gb] += y2_lo[~in_lo]
        stages[gb] += m_lo[~in_lo]
        counts[b] -= lo[~in_lo]
        m[b] -= m_lo[~in_lo]


def simulate_strong(
    coins: BinaryCoinPair,
    target: ProbabilityVector,
    C: float,
    runs: int,
    *,
    adversary: AdversarySpec | None = None,
    adversary_device: int = 1,
    seed: int = 0,
    context: tuple = (),
    m_cap: int | None = None,
) -> StrongBatch:
    """Run many bounded lotteries at once, exactly, in block jumps.

    Every supported adversary plays a letter that is constant over a
    lookahead window (honest, constant and stall are stationary; the
    push rule only changes state at its review stages),
    so whole windows of pair counts can be drawn from binomial chains
    and only blocks that cross the clock budget are bisected.  Setting
    ``m_cap=1`` forces stage-at-a-time sampling for differential
    tests.
    """
    if C <= 0:
        raise ValueError(f"C must be positive, got {C}")
    if runs < 0:
        raise ValueError(f"runs must be nonnegative, got {runs}")
    if adversary_device not in (1, 2):
        raise ValueError(f"adversary_device must be 1 or 2, got {adversary_device}")
    table = ScoreTable.from_coins(coins)
    partition = IntervalPartition(target)
    spec = adversary if adversary is not None else Honest()
    if not isinstance(spec, (Honest, Constant, Push, Stall)):
        raise TypeError(f"batch engine needs an adversary spec, got {spec!r}")

    dev1, dev2, harness = device_streams(seed, *context)
    w = table.flat.copy()
    w2 = w**2
    cap = int(m_cap) if m_cap is not None else M_MAX
    if cap < 1:
        raise ValueError(f"m_cap must be at least 1, got {cap}")
    cap = min(cap, M_MAX)

    honest1 = coins.prob(1, ALPHA)
    honest2 = coins.prob(2, ALPHA)

    # stationary adversary letter, when the attack defines one
    fixed_p: float | None = None
    if isinstance(spec, Honest):
        fixed_p = coins.prob(adversary_device, ALPHA)
    elif isinstance(spec, Constant):
        fixed_p = 1.0 if spec.letter == ALPHA else 0.0
    elif isinstance(spec, Stall):
        fixed_p = 1.0 if table.stall_letter(adversary_device) == ALPHA else 0.0
    else:
        aim_sum, f_pos, f_neg, rush, review, reach = _push_plan(
            table, partition, spec, adversary_device, C
        )
        finished = np.zeros(runs, dtype=bool)
        letters = np.full(runs, rush, dtype=np.int64)

    sum_y = np.zeros(runs)
    sum_y2 = np.zeros(runs)
    stages = np.zeros(runs, dtype=np.int64)
    active = np.ones(runs, dtype=bool)

    while np.any(active):
        idx = np.nonzero(active)[0]
        rem = C - sum_y2[idx]

        if fixed_p is not None:
            p_adv = np.full(idx.size, fixed_p)
            m_limit = np.full(idx.size, cap, dtype=np.int64)
        else:
            st = stages[idx]
            due = ~finished[idx] & (st % review == 0)
            if np.any(due):
                g = idx[due]
                d = aim_sum - sum_y[g]
                fin_now = np.abs(d) <= reach
                finished[g] = fin_now
                letters[g] = np.where(fin_now, rush, np.where(d > 0, f_pos, f_neg))
            p_adv = np.where(letters[idx] == ALPHA, 1.0, 0.0)
            # blocks must not cross a review stage; finished lanes keep
            # one letter forever and can jump straight to the budget
            to_review = review - (st % review)
            m_limit = np.where(finished[idx], cap, np.minimum(to_review, cap))
            m_limit = m_limit.astype(np.int64)

        if adversary_device == 1:
            p1, p2 = p_adv, np.full(idx.size, honest2)
        else:
            p1, p2 = np.full(idx.size, honest1), p_adv

        e_inc = _pair_probs(p1, p2) @ w2
        m = np.ceil(1.5 * rem / e_inc).astype(np.int64)
        m = np.minimum(np.maximum(m, 1), m_limit)

        k1 = dev1.binomial(m, p1)
        kaa = dev2.binomial(k1, p2)
        kba = dev2.binomial(m - k1, p2)
        counts = np.stack([kaa, k1 - kaa, kba, m - k1 - kba], axis=1)
        y2_blk = counts @ w2
        crossed = sum_y2[idx] + y2_blk >= C

        keep = idx[~crossed]
        sum_y[keep] += counts[~crossed] @ w
        sum_y2[keep] += y2_blk[~crossed]
        stages[keep] += m[~crossed]

        if np.any(crossed):
            _refine_crossings(
                harness, w, w2, C,
                sum_y, sum_y2, stages,
                idx[crossed], counts[crossed].copy(), m[crossed].copy(),
            )
            active[idx[crossed]] = False

    # same float cushion as the sequential runner
    if runs and int(stages.max(initial=0)) > table.stage_cap(C) + 2:
        raise AssertionError("variance clock failed to reach C within the hard cap")

    z = sum_y / math.sqrt(C)
    return StrongBatch(
        outcomes=partition.outcomes,
        C=C,
        outcome_idx=partition.indices_of(z),
        stages=stages,
        z=z,
        sum_y=sum_y,
    )


@dataclass(frozen=True)
class CalibrationProbe:
    C: float
    adversary: str
    device: int
    linf: float
    threshold: float
    passed: bool
    runs: int


@dataclass(frozen=True)
class CalibrationResult:
    epsilon: float
    C0: float
    C: float | None
    accepted: bool
    runs_per_probe: int
    probes: list[CalibrationProbe] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "C0": self.C0,
            "C": self.C,
            "accepted": self.accepted,
            "runs_per_probe": self.runs_per_probe,
            "probes": [vars(p) for p in self.probes],
        }


def calibrate_C(
    coins: BinaryCoinPair,
    target: ProbabilityVector,
    epsilon: float,
    *,
    suite: list[AdversarySpec] | None = None,
    seed: int = 0,
    runs_per_probe: int = 20_000,
    max_doublings: int = 12,
    delta: float = 0.01,
) -> CalibrationResult:
    """Find a clock budget that holds every suite attack within epsilon.

    Starts at C0 = 4 / epsilon^2 and doubles until every (adversary,
    device) probe keeps the empirical outcome distribution within
    epsilon/2 plus the sampling margin of the target, or the doubling
    budget runs out.  Passing the suite is evidence, not proof.
    """
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if runs_per_probe < 1:
        raise ValueError(f"runs_per_probe must be positive, got {runs_per_probe}")
    if suite is None:
        from .adversaries import default_suite

        suite = [Honest()] + default_suite(target.outcomes.labels)
    C0 = 4.0 / epsilon**2
    threshold = epsilon / 2.0 + hoeffding_margin(runs_per_probe, target.outcomes.size, delta)
    probes: list[CalibrationProbe] = []
    for k in range(max_doublings + 1):
        C = C0 * 2.0**k
        all_ok = True
        for spec in suite:
            devices = (1,) if isinstance(spec, Honest) else (1, 2)
            for dev in devices:
                batch = simulate_strong(
                    coins, target, C, runs_per_probe,
                    adversary=spec, adversary_device=dev,
                    seed=seed, context=("calibrate", k, spec.name, dev),
                )
                linf = linf_distance(batch.empirical(), target)
                ok = bool(linf <= threshold)
                probes.append(CalibrationProbe(C, spec.name, dev, linf, threshold, ok, runs_per_probe))
                all_ok = all_ok and ok
        if all_ok:
            return CalibrationResult(epsilon, C0, C, True, runs_per_probe, probes)
    return CalibrationResult(epsilon, C0, None, False, runs_per_probe, probes)


def score(a1: int, a2: int, coins: BinaryCoinPair) -> float:
    """Score of one letter pair under the table built from ``coins``."""
    return ScoreTable.from_coins(coins).score(a1, a2)


def build_partition(nu: ProbabilityVector) -> IntervalPartition:
    """Quantile partition of the normal line matching ``nu``."""
    return IntervalPartition(nu)
