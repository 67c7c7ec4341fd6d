"""Herman's token circulation on an odd ring, plain and adaptive.

Each node holds one bit and sends it to its right neighbor every round. A
node whose bit equals its left neighbor's holds a token; it re-draws its
bit at random, while every other node copies its left neighbor. On an odd
ring the token count is always odd, never increases, and reaches one with
probability 1; with a single token the holder is the leader and the token
either stays put or moves one node to the right ("counterclockwise" is
mapped to index +1, which is the direction the update rule provably moves
a token when the coin equals the holder's old bit).

``AdaptiveHermanProtocol`` layers the history collector and its detector
underneath the rule: every round a node shifts and exchanges its history,
checks whether the ring had exactly one token d rounds ago, and only draws
a coin while that check fails. After detection the coin comes from a
deterministic input policy; the default keep-bit policy feeds each holder
its own bit, which passes the token every single round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

from .engine import Configuration, Protocol, ProtocolError, RoundContext, ring
from .history import (
    AggregateArray,
    HistoryArray,
    aggregate_verdict,
    empty_aggregates,
    empty_history,
    extend_aggregates,
    hist_detect,
    merge,
    shift_aggregates,
    shift_insert,
)
from .randomness import POLICIES, InputPolicy, gated_word


@dataclass(frozen=True, slots=True)
class RingBits:
    """Ring state: n single bits packed into an integer, bit i = node i."""

    n: int
    word: int

    def __post_init__(self) -> None:
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("ring size must be odd and >= 3")
        if not 0 <= self.word < (1 << self.n):
            raise ValueError("bit word out of range")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "RingBits":
        bits = tuple(bits)
        word = 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError("bits must be 0 or 1")
            word |= b << i
        return cls(len(bits), word)

    @property
    def bits(self) -> Tuple[int, ...]:
        return tuple((self.word >> i) & 1 for i in range(self.n))


def _left_word(word: int, n: int) -> int:
    """Integer whose bit i is node i's left neighbor's bit."""
    return ((word << 1) | (word >> (n - 1))) & ((1 << n) - 1)


def _token_mask(word: int, n: int) -> int:
    return ~(word ^ _left_word(word, n)) & ((1 << n) - 1)


def step_word(word: int, n: int, coins: int) -> int:
    """One update of the packed ring: holders take their coin bit, others copy left."""
    mask = (1 << n) - 1
    left = ((word << 1) | (word >> (n - 1))) & mask
    holders = ~(word ^ left) & mask
    return (left & ~holders) | (coins & holders)


def tokens(state: RingBits) -> frozenset:
    """Nodes whose bit equals their left neighbor's bit."""
    t = _token_mask(state.word, state.n)
    return frozenset(i for i in range(state.n) if (t >> i) & 1)


def token_count(state: RingBits) -> int:
    return _token_mask(state.word, state.n).bit_count()


def herman_step(state: RingBits, coins: Mapping[int, int]) -> RingBits:
    """Apply the update rule simultaneously at all nodes.

    ``coins`` must supply one bit per current token holder; bits for
    non-holders are ignored.
    """
    n = state.n
    holders = _token_mask(state.word, n)
    cword = 0
    h = holders
    while h:
        i = (h & -h).bit_length() - 1
        h &= h - 1
        if i not in coins:
            raise ProtocolError(f"token holder {i} has no coin")
        cword |= (coins[i] & 1) << i
    return RingBits(n, step_word(state.word, n, cword))


def is_safe_tc(state: RingBits) -> bool:
    """Exactly one token in the ring."""
    return token_count(state) == 1


def leader(state: RingBits) -> int:
    """The unique token holder of a safe state."""
    t = _token_mask(state.word, state.n)
    if t.bit_count() != 1:
        raise ValueError(f"no unique leader: {t.bit_count()} tokens")
    return t.bit_length() - 1


def legal_transition(before: RingBits, after: RingBits) -> bool:
    """The single token stayed put or advanced one node (index +1 mod n)."""
    if not is_safe_tc(before) or not is_safe_tc(after):
        raise ValueError("legal_transition requires safe states on both sides")
    src, dst = leader(before), leader(after)
    return dst == src or dst == (src + 1) % before.n


def ring_safety_predicate(n: int):
    """Entry-map predicate for the history detector: exactly one token.

    Rejects maps with out-of-range keys or non-bit values; corrupted data
    must never produce a true verdict.
    """

    def is_safe(entries: Mapping[int, Any]) -> bool:
        word = 0
        for i, b in entries.items():
            if not isinstance(i, int) or not 0 <= i < n or b not in (0, 1):
                return False
            word |= b << i
        return _token_mask(word, n).bit_count() == 1

    return is_safe


class HermanProtocol(Protocol):
    """Plain rule under the engine: per-node state is the bit itself.

    The engine draws one coin bit per node per round; only holders consume
    theirs. This is the always-randomized baseline.
    """

    word_width = 1

    def __init__(self, n: int):
        if n < 3 or n % 2 == 0:
            raise ValueError("ring size must be odd and >= 3")
        self.topology = ring(n)

    def initial_configuration(self, bits: Iterable[int]) -> Configuration:
        state = RingBits.from_bits(bits)
        if state.n != self.topology.n:
            raise ValueError("bit count does not match ring size")
        return Configuration(0, state.bits)

    def messages(self, node: int, state: Any, ctx: RoundContext) -> Mapping[int, Any]:
        return {ctx.topology.right(node): state}

    def transition(self, node: int, state: Any, inbox: Mapping[int, Any], ctx: RoundContext) -> Any:
        b_l = inbox.get(ctx.topology.left(node))
        if b_l not in (0, 1):
            raise ProtocolError(f"node {node} got no bit from its left neighbor")
        if state != b_l:
            return b_l
        if ctx.word is None:
            raise ProtocolError(f"token holder {node} has no random input")
        return ctx.word.value & 1

    def summarize(self, config: Configuration) -> Dict[str, Any]:
        state = RingBits.from_bits(config.states)
        toks = tuple(sorted(tokens(state)))
        return {"bits": config.states, "tokens": toks, "token_count": len(toks)}


@dataclass(frozen=True, slots=True)
class HermanNodeState:
    """Composed per-node state: the bit plus the detector machinery."""

    bit: int
    history: HistoryArray
    aggs: Optional[AggregateArray]
    verdict: Optional[bool]
    agg_verdict: Optional[bool]


class AdaptiveHermanProtocol(Protocol):
    """Token circulation that stops drawing coins once convergence is detected.

    Per round and per node: shift own history (and, optionally, the
    constant-size token digests), exchange with both neighbors, merge,
    evaluate the detector on the deepest slot, gate the coin on the verdict,
    and apply the update rule.
    """

    word_width = 0

    def __init__(self, n: int, policy: InputPolicy = POLICIES["keep-bit"],
                 with_aggregate: bool = False):
        if n < 3 or n % 2 == 0:
            raise ValueError("ring size must be odd and >= 3")
        self.topology = ring(n)
        self.d = n // 2
        self.policy = policy
        self.with_aggregate = with_aggregate
        self._is_safe = ring_safety_predicate(n)

    def initial_configuration(
        self,
        bits: Iterable[int],
        histories: Optional[Sequence[HistoryArray]] = None,
        aggregates: Optional[Sequence[AggregateArray]] = None,
    ) -> Configuration:
        state = RingBits.from_bits(bits)
        n = self.topology.n
        if state.n != n:
            raise ValueError("bit count does not match ring size")
        states = []
        for i, b in enumerate(state.bits):
            hist = histories[i] if histories is not None else empty_history(self.d)
            if hist.depth != self.d:
                raise ValueError(f"history depth {hist.depth} != diameter {self.d}")
            if self.with_aggregate:
                aggs = aggregates[i] if aggregates is not None else empty_aggregates(self.d)
            else:
                aggs = None
            states.append(HermanNodeState(b, hist, aggs, None, None))
        return Configuration(0, tuple(states))

    def _shifted(self, node: int, state: HermanNodeState):
        hist = shift_insert(state.history, state.bit, node)
        aggs = None
        if state.aggs is not None:
            aggs = shift_aggregates(state.aggs, self.topology.n, node, state.bit)
        return hist, aggs

    def messages(self, node: int, state: HermanNodeState, ctx: RoundContext) -> Mapping[int, Any]:
        hist, aggs = self._shifted(node, state)
        topo = ctx.topology
        # The bit rides only to the right neighbor; histories go both ways.
        return {
            topo.right(node): (state.bit, hist, aggs),
            topo.left(node): (None, hist, aggs),
        }

    def transition(self, node: int, state: HermanNodeState, inbox: Mapping[int, Any],
                   ctx: RoundContext) -> HermanNodeState:
        topo = ctx.topology
        left_msg = inbox.get(topo.left(node))
        right_msg = inbox.get(topo.right(node))
        if left_msg is None or right_msg is None:
            raise ProtocolError(f"node {node} missing a neighbor message")

        hist, aggs = self._shifted(node, state)
        hist = merge(merge(hist, left_msg[1]), right_msg[1])
        verdict = hist_detect(hist, self._is_safe, topo.n)

        agg_verdict = None
        if aggs is not None:
            la, ra = left_msg[2], right_msg[2]
            if la is not None and ra is not None:
                aggs = extend_aggregates(aggs, la, ra, topo.n, node)
            agg_verdict = aggregate_verdict(aggs)

        coin = gated_word(verdict, ctx.source, 1, self.policy, ctx.meter, node, state.bit)
        b_l = left_msg[0]
        if b_l not in (0, 1):
            raise ProtocolError(f"node {node} got no bit from its left neighbor")
        new_bit = b_l if state.bit != b_l else coin.value & 1
        return HermanNodeState(new_bit, hist, aggs, verdict, agg_verdict)

    def summarize(self, config: Configuration) -> Dict[str, Any]:
        states: Tuple[HermanNodeState, ...] = config.states
        ring_state = RingBits.from_bits(s.bit for s in states)
        toks = tuple(sorted(tokens(ring_state)))
        summary: Dict[str, Any] = {
            "bits": tuple(s.bit for s in states),
            "tokens": toks,
            "token_count": len(toks),
            "leader": toks[0] if len(toks) == 1 else None,
            "verdicts": tuple(s.verdict for s in states),
        }
        if self.with_aggregate:
            summary["agg_verdicts"] = tuple(s.agg_verdict for s in states)
        return summary
