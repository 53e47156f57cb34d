"""Unbounded jointly controlled lottery with public fault detection.

The public state is a belief vector over the outcome set, started at
the target.  Each stage a successor map is built from the current
belief: the same zero-mean score table as the bounded lottery decides
how much mass moves between the currently largest coordinate and the
smallest positive one, with the step size chosen as the largest value
that keeps all four successors inside the simplex.  Exactly one pair
of letters, the binding pair, drives a coordinate to zero; once only
one coordinate is left the lottery is decided.

One honest device keeps the belief a martingale, so the decided
outcome has exactly the target distribution.  The price of dropping
the bounded clock is that a dishonest device can stall forever, but
only by avoiding its own binding letter, a behavior any observer can
read off the public transcript: that is what :func:`detect_fault`
does.
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
)
from .stats import EmpiricalDistribution
from .strong import ScoreTable

# A successor whose coordinate dips below -_NEG_TOL is a logic error;
# anything in [-_NEG_TOL, 0) is float noise and gets clamped to zero.
_NEG_TOL = 1e-12


def default_max_stages(coins: BinaryCoinPair, target: ProbabilityVector) -> int:
    """Stage budget that makes honest timeouts practically impossible.

    Every stage the binding pair is hit with probability at least c1,
    and each hit zeroes one coordinate, so honest play terminates in
    around |J| / c1 stages; the log(100) factor buys slack.
    """
    return math.ceil(target.outcomes.size * math.log(100.0) / coins.c1)


def _successor_arrays(lam: np.ndarray, w: np.ndarray):
    """Successor maps for a batch of non-Dirac belief rows.

    ``lam`` has shape (n, J) with at least two positive coordinates
    per row.  Returns (d, s, j_plus, j_minus, binding) where ``d`` has
    shape (n, 4, J) in pair order (aa, ab, ba, bb).
    """
    n, J = lam.shape
    rows = np.arange(n)
    j_plus = np.argmax(lam, axis=1)
    masked = np.where(lam > 0.0, lam, np.inf)
    masked[rows, j_plus] = np.inf
    j_minus = np.argmin(masked, axis=1)
    lam_p = lam[rows, j_plus]
    lam_m = lam[rows, j_minus]
    # largest step keeping every successor in the simplex
    s_k = np.where(w > 0.0, lam_m[:, None], lam_p[:, None]) / np.abs(w)
    s = s_k.min(axis=1)
    binding = np.argmin(s_k, axis=1).astype(np.int64)

    delta = s[:, None] * w[None, :]  # (n, 4)
    d = np.repeat(lam[:, None, :], 4, axis=1)
    kk = np.broadcast_to(np.arange(4), (n, 4))
    rr = np.broadcast_to(rows[:, None], (n, 4))
    d[rr, kk, np.broadcast_to(j_plus[:, None], (n, 4))] += delta
    d[rr, kk, np.broadcast_to(j_minus[:, None], (n, 4))] -= delta

    # the constrained coordinate of every pair that attains s* is an
    # exact zero, not a rounding residue
    hit = s_k == s[:, None]
    coord = np.where(w > 0.0, j_minus[:, None], j_plus[:, None])
    cur = d[rr, kk, coord]
    d[rr, kk, coord] = np.where(hit, 0.0, cur)

    if np.any(d < -_NEG_TOL):
        raise AssertionError("successor left the simplex")
    np.maximum(d, 0.0, out=d)
    sums = d.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise AssertionError("successor mass drifted away from 1")
    d /= sums[:, :, None]
    return d, s, j_plus, j_minus, binding


def _as_table(coins: BinaryCoinPair | ScoreTable) -> ScoreTable:
    if isinstance(coins, ScoreTable):
        return coins
    return ScoreTable.from_coins(coins)


@dataclass(frozen=True)
class SuccessorMap:
    """One stage's public update rule, derived from the belief alone."""

    lam: np.ndarray
    s: float
    j_plus: int
    j_minus: int
    binding_pair: int       # index into pair order (aa, ab, ba, bb)
    d: np.ndarray           # shape (4, J)

    def shrink_letter(self, device: int) -> int:
        """The device's half of the binding pair."""
        if device == 1:
            return self.binding_pair >> 1
        if device == 2:
            return self.binding_pair & 1
        raise ValueError(f"device must be 1 or 2, got {device}")

    def successor(self, a1: int, a2: int) -> np.ndarray:
        return self.d[2 * a1 + a2]


def build_successor(
    lam: np.ndarray | ProbabilityVector,
    coins: BinaryCoinPair | ScoreTable,
) -> SuccessorMap | None:
    """Successor map for one belief vector, or None once it is decided.

    Decided means exactly one strictly positive coordinate; zeros are
    exact here, so no tolerance is involved.
    """
    table = _as_table(coins)
    if isinstance(lam, ProbabilityVector):
        lam = lam.mass
    lam = np.asarray(lam, dtype=np.float64)
    if int(np.count_nonzero(lam > 0.0)) <= 1:
        return None
    d, s, jp, jm, binding = _successor_arrays(lam[None, :], table.flat)
    return SuccessorMap(
        lam=lam.copy(),
        s=float(s[0]),
        j_plus=int(jp[0]),
        j_minus=int(jm[0]),
        binding_pair=int(binding[0]),
        d=d[0],
    )


def step(
    lam: np.ndarray | ProbabilityVector,
    a1: int,
    a2: int,
    coins: BinaryCoinPair | ScoreTable,
) -> np.ndarray:
    """Apply one letter pair to a belief vector."""
    m = build_successor(lam, coins)
    if m is None:
        raise ValueError("lottery already decided, no successor exists")
    return m.successor(a1, a2)


@dataclass
class _WeakView:
    """Mechanism state a strategy may read through ``StageContext.mech``."""

    table: ScoreTable
    target: ProbabilityVector
    lam: np.ndarray
    map: SuccessorMap | None = None
    stage: int = 0


class BoundWeakAdversary:
    """One adversary spec bound to a device of the detecting lottery."""

    def __init__(self, spec: AdversarySpec, device: int, table: ScoreTable, outcomes: OutcomeSet):
        if device not in (1, 2):
            raise ValueError(f"device must be 1 or 2, got {device}")
        self.spec = spec
        self.device = device
        self._honest_p = table.coins.prob(device, ALPHA)
        self._target_idx = outcomes.index(spec.target) if isinstance(spec, Push) else None

    def prob_alpha(self, ctx: StageContext) -> float:
        spec = self.spec
        if isinstance(spec, Honest):
            return self._honest_p
        if isinstance(spec, Constant):
            return 1.0 if spec.letter == ALPHA else 0.0
        m: SuccessorMap = ctx.mech.map
        if isinstance(spec, Stall):
            # refuse the binding letter: the only way to delay forever
            letter = BETA if m.shrink_letter(self.device) == ALPHA else ALPHA
            return 1.0 if letter == ALPHA else 0.0
        # push: own letter whose best-case successor favors the target
        t = self._target_idx
        if self.device == 1:
            va = max(m.d[0, t], m.d[1, t])
            vb = max(m.d[2, t], m.d[3, t])
        else:
            va = max(m.d[0, t], m.d[2, t])
            vb = max(m.d[1, t], m.d[3, t])
        return 1.0 if va >= vb else 0.0


def bind_weak(
    spec: AdversarySpec | DeviceStrategy,
    device: int,
    table: ScoreTable,
    outcomes: OutcomeSet,
) -> DeviceStrategy:
    if isinstance(spec, (Honest, Constant, Push, Stall)):
        return BoundWeakAdversary(spec, device, table, outcomes)
    if hasattr(spec, "prob_alpha"):
        return spec
    raise TypeError(f"not an adversary spec or device strategy: {spec!r}")


@dataclass(frozen=True)
class WeakRunResult:
    outcome: str | None     # None means the stage budget ran out
    outcome_index: int      # -1 on timeout
    stages: int
    final: np.ndarray       # belief when play stopped
    transcript: Transcript | None = None
    verdict: "DetectionVerdict | None" = None


def run_weak(
    coins: BinaryCoinPair,
    target: ProbabilityVector,
    s1: AdversarySpec | DeviceStrategy | None = None,
    s2: AdversarySpec | DeviceStrategy | None = None,
    *,
    seed: int = 0,
    max_stages: int | None = None,
    record: bool = True,
    context: tuple = (),
    window: int = 1000,
    faulty_below: float = 0.1,
    honest_above: float = 0.2,
) -> WeakRunResult:
    """Play one detecting lottery run stage by stage.

    Transcript stage records are (a1, a2, shrink1, shrink2) so that a
    third party can audit who kept avoiding their binding letter; the
    returned verdict is detect_fault on that transcript with the given
    window and thresholds.
    """
    table = ScoreTable.from_coins(coins)
    if max_stages is None:
        max_stages = default_max_stages(coins, target)
    if max_stages < 0:
        raise ValueError(f"max_stages must be nonnegative, got {max_stages}")
    st1 = bind_weak(s1 if s1 is not None else Honest(), 1, table, target.outcomes)
    st2 = bind_weak(s2 if s2 is not None else Honest(), 2, table, target.outcomes)
    rng1, rng2, _ = device_streams(seed, *context)
    view = _WeakView(table=table, target=target, lam=target.mass.copy())
    letters1: list[int] = []
    letters2: list[int] = []
    records: list[tuple[int, int, int, int]] = []
    stage = 0
    while stage < max_stages:
        m = build_successor(view.lam, table)
        if m is None:
            break
        view.map = m
        view.stage = stage
        ctx1 = StageContext(1, stage, letters1, letters2, view)
        ctx2 = StageContext(2, stage, letters2, letters1, view)
        p1 = float(st1.prob_alpha(ctx1))
        p2 = float(st2.prob_alpha(ctx2))
        if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
            raise ValueError("strategy returned a probability outside [0, 1]")
        a1 = ALPHA if rng1.random() < p1 else BETA
        a2 = ALPHA if rng2.random() < p2 else BETA
        letters1.append(a1)
        letters2.append(a2)
        if record:
            records.append((a1, a2, m.shrink_letter(1), m.shrink_letter(2)))
        view.lam = m.successor(a1, a2)
        stage += 1
    decided = build_successor(view.lam, table) is None
    if decided:
        idx = int(np.argmax(view.lam))
        outcome = target.outcomes.labels[idx]
    else:
        idx, outcome = -1, None
    transcript = Transcript(stages=records, terminal=outcome) if record else None
    verdict = None
    if record:
        verdict = detect_fault(
            transcript, coins,
            window=window, faulty_below=faulty_below, honest_above=honest_above,
        )
    return WeakRunResult(outcome, idx, stage, view.lam, transcript, verdict)


@dataclass(frozen=True)
class DetectionVerdict:
    verdict: str            # none | inconclusive | device1_faulty | device2_faulty
    match_rate1: float
    match_rate2: float
    window_stages: int


def _verdict_from_counts(
    match1: float,
    match2: float,
    window_stages: int,
    window: int,
    terminated: bool,
    faulty_below: float,
    honest_above: float,
) -> str:
    """Decision rule shared by single-run and batch detection."""
    if terminated:
        return "none"
    if window_stages < window:
        return "inconclusive"
    r1 = match1 / window_stages
    r2 = match2 / window_stages
    if r1 < faulty_below and r2 > honest_above:
        return "device1_faulty"
    if r2 < faulty_below and r1 > honest_above:
        return "device2_faulty"
    return "inconclusive"


def detect_fault(
    transcript: Transcript,
    coins: BinaryCoinPair,
    *,
    window: int = 1000,
    faulty_below: float = 0.1,
    honest_above: float = 0.2,
) -> DetectionVerdict:
    """Blame a stalling device from the public transcript alone.

    A device's match rate is how often it played its own binding
    letter over the trailing ``window`` stages.  An honest device's
    rate concentrates at or above c0 and a stalling one sits at zero,
    so thresholds with faulty_below < honest_above < c0 separate the
    two; honest_above at or above c0 only costs sensitivity, never
    soundness, since blame still needs the partner rate above it.  The
    verdict is one-sided by design; "inconclusive" is the honest
    answer for anything short of a clear single culprit.
    """
    if not 0.0 <= faulty_below < honest_above < 1.0:
        raise ValueError("need 0 <= faulty_below < honest_above < 1")
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    if not isinstance(coins, BinaryCoinPair):
        raise TypeError("coins must be a BinaryCoinPair; thresholds are read against its c0")
    stages = transcript.stages
    tail = stages[-window:]
    m1 = sum(1 for a1, _, s1, _ in tail if a1 == s1)
    m2 = sum(1 for _, a2, _, s2 in tail if a2 == s2)
    n = len(tail)
    verdict = _verdict_from_counts(
        m1, m2, n, window, transcript.terminal is not None, faulty_below, honest_above
    )
    rate1 = m1 / n if n else math.nan
    rate2 = m2 / n if n else math.nan
    return DetectionVerdict(verdict, rate1, rate2, n)


@dataclass(frozen=True)
class WeakBatch:
    """Vector result of many detecting lottery runs."""

    outcomes: OutcomeSet
    outcome_idx: np.ndarray     # int64, -1 on timeout
    stages: np.ndarray          # int64
    match1: np.ndarray          # int64, binding-letter matches in the window
    match2: np.ndarray
    window_stages: np.ndarray   # int64, stages each run spent inside the window
    window: int
    max_stages: int

    @property
    def runs(self) -> int:
        return int(self.outcome_idx.size)

    @property
    def timeout_rate(self) -> float:
        if self.runs == 0:
            return 0.0
        return float(np.mean(self.outcome_idx < 0))

    def empirical(self) -> EmpiricalDistribution:
        """Distribution over decided outcomes; timeouts are excluded."""
        return EmpiricalDistribution.from_indices(self.outcomes, self.outcome_idx)

    def verdicts(
        self,
        *,
        faulty_below: float = 0.1,
        honest_above: float = 0.2,
    ) -> list[str]:
        if not 0.0 <= faulty_below < honest_above < 1.0:
            raise ValueError("need 0 <= faulty_below < honest_above < 1")
        out = []
        for i in range(self.runs):
            out.append(
                _verdict_from_counts(
                    int(self.match1[i]),
                    int(self.match2[i]),
                    int(self.window_stages[i]),
                    self.window,
                    bool(self.outcome_idx[i] >= 0),
                    faulty_below,
                    honest_above,
                )
            )
        return out


def simulate_weak(
    coins: BinaryCoinPair,
    target: ProbabilityVector,
    runs: int,
    *,
    adversary: AdversarySpec | None = None,
    adversary_device: int = 1,
    seed: int = 0,
    context: tuple = (),
    max_stages: int | None = None,
    window: int = 1000,
) -> WeakBatch:
    """Run many detecting lotteries in lockstep.

    All runs advance one stage per iteration with vectorized successor
    maps.  Binding-letter matches are tallied over the trailing
    ``window`` stages of the budget, which is what the batch fault
    verdicts are computed from.
    """
    if runs < 0:
        raise ValueError(f"runs must be nonnegative, got {runs}")
    if adversary_device not in (1, 2):
        raise ValueError(f"adversary_device must be 1 or 2, got {adversary_device}")
    table = ScoreTable.from_coins(coins)
    if max_stages is None:
        max_stages = default_max_stages(coins, target)
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    spec = adversary if adversary is not None else Honest()
    if not isinstance(spec, (Honest, Constant, Push, Stall)):
        raise TypeError(f"batch engine needs an adversary spec, got {spec!r}")
    tgt_idx = target.outcomes.index(spec.target) if isinstance(spec, Push) else -1

    dev1, dev2, _ = device_streams(seed, *context)
    w = table.flat.copy()
    J = target.outcomes.size
    n = runs

    lam = np.tile(target.mass, (n, 1))
    active = np.ones(n, dtype=bool)
    outcome_idx = np.full(n, -1, dtype=np.int64)
    stages = np.zeros(n, dtype=np.int64)
    match1 = np.zeros(n, dtype=np.int64)
    match2 = np.zeros(n, dtype=np.int64)
    window_stages = np.zeros(n, dtype=np.int64)
    window_start = max(0, max_stages - window)
    honest1 = coins.prob(1, ALPHA)
    honest2 = coins.prob(2, ALPHA)

    for stage in range(max_stages):
        if not np.any(active):
            break
        decided = active & (np.count_nonzero(lam > 0.0, axis=1) <= 1)
        if np.any(decided):
            outcome_idx[decided] = np.argmax(lam[decided], axis=1)
            active &= ~decided
        # stream consumption is one draw per device per stage for every
        # run, regardless of who is still active: keeps runs comparable
        # across adversaries under a shared seed
        u1 = dev1.random(n)
        u2 = dev2.random(n)
        if not np.any(active):
            continue
        idx = np.nonzero(active)[0]
        d, s, jp, jm, binding = _successor_arrays(lam[idx], w)
        shrink1 = (binding >> 1).astype(np.int64)
        shrink2 = (binding & 1).astype(np.int64)

        p1 = np.full(idx.size, honest1)
        p2 = np.full(idx.size, honest2)
        p_adv = p1 if adversary_device == 1 else p2
        if isinstance(spec, Constant):
            p_adv[:] = 1.0 if spec.letter == ALPHA else 0.0
        elif isinstance(spec, Stall):
            own = shrink1 if adversary_device == 1 else shrink2
            p_adv[:] = 0.0
            p_adv[own == BETA] = 1.0
        elif isinstance(spec, Push):
            tgt = d[:, :, tgt_idx]  # (k, 4)
            if adversary_device == 1:
                va = np.maximum(tgt[:, 0], tgt[:, 1])
                vb = np.maximum(tgt[:, 2], tgt[:, 3])
            else:
                va = np.maximum(tgt[:, 0], tgt[:, 2])
                vb = np.maximum(tgt[:, 1], tgt[:, 3])
            p_adv[:] = np.where(va >= vb, 1.0, 0.0)

        a1 = np.where(u1[idx] < p1, ALPHA, BETA)
        a2 = np.where(u2[idx] < p2, ALPHA, BETA)
        if stage >= window_start:
            match1[idx] += a1 == shrink1
            match2[idx] += a2 == shrink2
            window_stages[idx] += 1
        pair = 2 * a1 + a2
        lam[idx] = d[np.arange(idx.size), pair, :]
        stages[idx] += 1

    decided = active & (np.count_nonzero(lam > 0.0, axis=1) <= 1)
    if np.any(decided):
        outcome_idx[decided] = np.argmax(lam[decided], axis=1)

    return WeakBatch(
        outcomes=target.outcomes,
        outcome_idx=outcome_idx,
        stages=stages,
        match1=match1,
        match2=match2,
        window_stages=window_stages,
        window=window,
        max_stages=max_stages,
    )
