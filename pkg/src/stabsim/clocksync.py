"""Byzantine-tolerant clock testbed with the tally detector and surrogates.

Every node broadcasts its k-valued clock each round and tallies how many
nodes (itself included) reported its own value. With n >= 3f+1 the tally
against threshold n-f is an unreliable convergence detector with exactly
the guarantees the surrogate scheme needs: if all correct clocks agree,
every correct node's tally reaches the threshold no matter what Byzantine
nodes report, and if two correct clocks differ, the smaller camp's tally is
at most floor((n-f')/2) + f', which is strictly below the threshold, so at
least one correct node keeps supplying randomness.

The clock rule itself is a minimal stand-in for a real synchronization
algorithm: move to (v+1) mod k when some value v holds a >= n-f
supermajority (at most one value can), otherwise take the surrogate bits.
That gives closure under any Byzantine behaviour from a synchronized start,
and convergence in the fault-free case; convergence under active Byzantine
nodes is the business of a full synchronization algorithm and is not
claimed here.

The detector verdict gates the next round's surrogate words and the XOR of
a round's words is consumed one round later, so a word used at round i was
produced by the detector instance started at round i-2. The first two
rounds fall back to fresh local bits while the pipeline fills.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

from .engine import (
    ByzantineStrategy,
    Configuration,
    MessageView,
    Protocol,
    RoundContext,
    complete,
)
from .randomness import BOTTOM, Pipeline, RandWord, draw, surrogate_round

PIPELINE_LATENCY = 2


def tally(own: int, received: Mapping[int, Optional[int]]) -> int:
    """Count of nodes reporting the same clock as ``own``, self included.

    Missing or malformed reports never match; they can only lower tallies.
    """
    return 1 + sum(1 for v in received.values() if v == own)


def clock_detect(tally_count: int, n: int, f: int) -> bool:
    """Tally detector verdict: at least n-f agreeing reports."""
    if n < 3 * f + 1:
        raise ValueError(f"n={n} violates n >= 3f+1 for f={f}")
    return tally_count >= n - f


def minority_tally_bound(n: int, f: int, f_present: int) -> bool:
    """Worst-case minority tally stays strictly below the detector threshold.

    With f_present <= f actual Byzantine nodes and the correct nodes split
    over two clock values, a node on the smaller side tallies at most
    floor((n-f')/2) + f' even when every Byzantine node echoes its value;
    true iff that bound is <= n-f-1.
    """
    if f_present > f or n < 3 * f + 1:
        raise ValueError("requires f' <= f and n >= 3f+1")
    return (n - f_present) // 2 + f_present <= n - f - 1


def toy_clock_step(
    own: int,
    received: Mapping[int, Optional[int]],
    surrogate: RandWord,
    n: int,
    f: int,
    k: int = 2,
) -> int:
    """Minimal clock rule: advance a supermajority value, else take random bits.

    At most one value can reach n-f support when n >= 3f+1, so the
    deterministic branch is well-defined.
    """
    support: Dict[int, int] = {own: 1}
    for v in received.values():
        if v is not None:
            support[v] = support.get(v, 0) + 1
    for v, count in support.items():
        if count >= n - f:
            return (v + 1) % k
    return surrogate.value % k


@dataclass(frozen=True, slots=True)
class TallyReport:
    """One node's detector reading for one round."""

    node: int
    tally: int
    threshold: int

    @property
    def verdict(self) -> bool:
        return self.tally >= self.threshold


def tally_report(node: int, own: int, received: Mapping[int, Optional[int]],
                 n: int, f: int) -> TallyReport:
    """Tally the received reports and package the verdict for node ``node``."""
    count = tally(own, received)
    clock_detect(count, n, f)  # validates n >= 3f+1
    return TallyReport(node, count, n - f)


@dataclass(frozen=True, slots=True)
class ClockNodeState:
    """Composed per-node state.

    ``outgoing`` holds the surrogate words staged for the next round (one
    per destination, self included), gated by ``verdict``; ``pipeline``
    stages each round's XOR result until it is consumed two rounds after
    its detector instance started.
    """

    clock: int
    verdict: Optional[bool]
    outgoing: Optional[Tuple[RandWord, ...]]
    pipeline: Pipeline


def _sane_clock(value: Any, k: int) -> Optional[int]:
    return value if isinstance(value, int) and 0 <= value < k else None


class AdaptiveClockProtocol(Protocol):
    """Clock testbed composed with the tally detector and surrogate exchange."""

    word_width = 0

    def __init__(self, n: int, f: int, k: int = 2, width: int = 1):
        if n < 3 * f + 1:
            raise ValueError(f"n={n} violates n >= 3f+1 for f={f}")
        if k < 2 or width < 1:
            raise ValueError("need k >= 2 and width >= 1")
        self.topology = complete(n)
        self.f = f
        self.k = k
        self.width = width

    def initial_configuration(self, clocks) -> Configuration:
        clocks = tuple(clocks)
        if len(clocks) != self.topology.n:
            raise ValueError("clock count does not match node count")
        if any(not 0 <= c < self.k for c in clocks):
            raise ValueError(f"clock values must lie in [0, {self.k})")
        states = tuple(
            ClockNodeState(c, None, None, Pipeline(PIPELINE_LATENCY)) for c in clocks
        )
        return Configuration(0, states)

    def messages(self, node: int, state: ClockNodeState, ctx: RoundContext) -> Mapping[int, Any]:
        out = {}
        words = state.outgoing
        for j in ctx.topology.neighbors(node):
            out[j] = (state.clock, words[j] if words is not None else BOTTOM)
        return out

    def transition(self, node: int, state: ClockNodeState, inbox: Mapping[int, Any],
                   ctx: RoundContext) -> ClockNodeState:
        n, f, k, width = ctx.topology.n, self.f, self.k, self.width
        rnd = ctx.round

        reports: Dict[int, Optional[int]] = {}
        words: Dict[int, Any] = {}
        for j, payload in inbox.items():
            if isinstance(payload, tuple) and len(payload) == 2:
                reports[j] = _sane_clock(payload[0], k)
                words[j] = payload[1]
            else:
                reports[j] = None
        # Own self-addressed surrogate word loops back locally.
        words[node] = state.outgoing[node] if state.outgoing is not None else BOTTOM

        verdict = clock_detect(tally(state.clock, reports), n, f)
        outgoing, combined = surrogate_round(
            verdict, ctx.source, ctx.meter, node, words, n, width
        )

        pipeline = state.pipeline
        consumed = pipeline.latest(rnd)
        if consumed is None:
            # Pipeline still filling: fall back to fresh local bits.
            consumed = draw(ctx.source, width, ctx.meter, node)
        if rnd >= 1:
            pipeline = pipeline.push(rnd - 1, combined)

        new_clock = toy_clock_step(state.clock, reports, consumed, n, f, k)
        return ClockNodeState(
            new_clock, verdict, tuple(outgoing[j] for j in range(n)), pipeline
        )

    def summarize(self, config: Configuration) -> Dict[str, Any]:
        clocks = []
        verdicts = []
        for s in config.states:
            if isinstance(s, ClockNodeState):
                clocks.append(s.clock)
                verdicts.append(s.verdict)
            else:
                clocks.append(None)
                verdicts.append(None)
        return {"clocks": tuple(clocks), "verdicts": tuple(verdicts)}


# ---------------------------------------------------------------------------
# Shipped Byzantine strategies
# ---------------------------------------------------------------------------

def _observed_clock(view: MessageView, node: int, observer: int, k: int) -> int:
    """Clock ``node`` broadcast in the previous round, as seen by ``observer``."""
    if view.rounds:
        payload = view.sent(view.rounds - 1).get((node, observer))
        if isinstance(payload, tuple) and len(payload) == 2:
            value = _sane_clock(payload[0], k)
            if value is not None:
                return value
    return 0


class SilentStrategy(ByzantineStrategy):
    """Send nothing at all."""

    name = "silent"

    def message(self, rnd: int, sender: int, receiver: int, view: MessageView) -> Any:
        return None


class EchoReceiverStrategy(ByzantineStrategy):
    """Tell every receiver what it wants to hear: its own last clock.

    This is the worst case for the tally detector, inflating each receiver's
    tally by the full Byzantine head count.
    """

    name = "echo-receiver"

    def __init__(self, k: int = 2):
        self.k = k

    def message(self, rnd: int, sender: int, receiver: int, view: MessageView) -> Any:
        return (_observed_clock(view, receiver, sender, self.k), BOTTOM)


class FlipStrategy(ByzantineStrategy):
    """Always report the clock value the receiver does not hold."""

    name = "flip"

    def __init__(self, k: int = 2):
        self.k = k

    def message(self, rnd: int, sender: int, receiver: int, view: MessageView) -> Any:
        return ((_observed_clock(view, receiver, sender, self.k) + 1) % self.k, BOTTOM)


class RandomStrategy(ByzantineStrategy):
    """Seeded noise: random clock values and random surrogate words.

    Stateless per call so that identical runs stay bit-identical even when
    one strategy object is reused.
    """

    name = "random"

    def __init__(self, seed: int, k: int = 2, width: int = 1):
        self.seed = seed
        self.k = k
        self.width = width

    def message(self, rnd: int, sender: int, receiver: int, view: MessageView) -> Any:
        rng = random.Random(self.seed * 1000003 + rnd * 8191 + sender * 131 + receiver)
        return (rng.randrange(self.k), RandWord(self.width, rng.getrandbits(self.width)))


def make_strategy(name: str, seed: int = 0, k: int = 2, width: int = 1) -> ByzantineStrategy:
    """Instantiate a shipped strategy by name."""
    if name == "silent":
        return SilentStrategy()
    if name == "echo-receiver":
        return EchoReceiverStrategy(k)
    if name == "flip":
        return FlipStrategy(k)
    if name == "random":
        return RandomStrategy(seed, k, width)
    raise ValueError(f"unknown Byzantine strategy {name!r}")


STRATEGY_NAMES = ("silent", "echo-receiver", "random", "flip")
