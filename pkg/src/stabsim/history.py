"""Self-stabilizing history collection and the detectors built on it.

Each node keeps d+1 partial configurations, where d is the graph diameter:
slot j describes the system j rounds in the past. Every round the array
shifts one slot deeper, the node inserts its own current state at slot 0,
sends the whole array to its neighbors, and merges what it receives
slot-wise. After exactly d rounds the deepest slot holds the true, complete
configuration of d rounds ago, no matter how the arrays were initialized,
because corrupted entries sink one slot per round until they fall off the
end while genuine entries spread one hop per round.

The array-of-maps form is what the convergence detector reads. For token
circulation a constant-size digest per slot suffices: an arc of the ring,
the number of tokens decided inside the arc (capped at 2), and the arc's
two endpoint bits, which is all that is needed to stitch arcs together.

The module also houses the randomness store used by the weakened detector
variant, where any node that suspects non-convergence generates words for
everybody and receivers XOR all words addressed to them from d rounds back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from .engine import ProtocolError
from .randomness import RandWord, xor_combine


@dataclass(frozen=True)
class PartialConfiguration:
    """Possibly incomplete snapshot of one past round."""

    round: int
    entries: Mapping[int, Any]

    def is_full(self, n: int) -> bool:
        return len(self.entries) == n


@dataclass(frozen=True)
class HistoryArray:
    """d+1 slots of per-round entry maps; slot j lies j rounds in the past.

    The intended round of a slot is derived from its position, never stored,
    so a corrupted round index heals by construction.
    """

    slots: Tuple[Mapping[int, Any], ...]

    @property
    def depth(self) -> int:
        return len(self.slots) - 1

    def partial_at(self, j: int, current_round: int) -> PartialConfiguration:
        return PartialConfiguration(current_round - j, self.slots[j])


def empty_history(depth: int) -> HistoryArray:
    """All-empty array with slots 0..depth."""
    return HistoryArray(tuple({} for _ in range(depth + 1)))


def shift_insert(history: HistoryArray, self_state: Any, self_id: int) -> HistoryArray:
    """Deepen every slot by one, drop the deepest, start slot 0 with own state."""
    return HistoryArray(({self_id: self_state},) + history.slots[:-1])


def merge(mine: HistoryArray, theirs: HistoryArray) -> HistoryArray:
    """Slot-wise union; on a key conflict the receiver's entry wins.

    Any deterministic conflict rule is correct: a corrupted entry sinks one
    slot per round and is discarded within d rounds, and genuine entries for
    the same node and round never disagree.
    """
    if len(mine.slots) != len(theirs.slots):
        raise ProtocolError(
            f"history length mismatch: {len(mine.slots)} != {len(theirs.slots)}"
        )
    return HistoryArray(tuple(t | m for m, t in zip(mine.slots, theirs.slots)))


def hist_detect(history: HistoryArray, is_safe: Callable[[Mapping[int, Any]], bool], n: int) -> bool:
    """True iff the deepest slot is complete and satisfies the safety predicate.

    An incomplete deepest slot yields false: a false verdict merely keeps
    randomness flowing, while a true verdict must never rest on unverified
    data.
    """
    deepest = history.slots[-1]
    return len(deepest) == n and is_safe(deepest)


def history_to_triples(history: HistoryArray) -> Tuple[Tuple[int, int, Any], ...]:
    """Wire form: (slot index, node id, state) triples, slot-major, id-ordered."""
    return tuple(
        (j, node, slot[node])
        for j, slot in enumerate(history.slots)
        for node in sorted(slot)
    )


def history_from_triples(triples: Tuple[Tuple[int, int, Any], ...], depth: int) -> HistoryArray:
    slots: Tuple[Dict[int, Any], ...] = tuple({} for _ in range(depth + 1))
    for j, node, state in triples:
        if not 0 <= j <= depth:
            raise ProtocolError(f"slot index {j} out of range for depth {depth}")
        slots[j][node] = state
    return HistoryArray(slots)


# ---------------------------------------------------------------------------
# Constant-size aggregation for token circulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class TokenAggregate:
    """Digest of one past round over a contiguous arc of the ring.

    ``capped`` counts the tokens decided by node pairs lying entirely inside
    the arc, saturated at 2; the endpoint bits are the arc's first and last
    node bits, kept so adjacent arcs can be stitched. An arc of length n is
    a complete view of the ring (the wrap-around pair included).
    """

    n: int
    start: int
    length: int
    first_bit: int
    last_bit: int
    capped: int

    def __post_init__(self) -> None:
        if not 1 <= self.length <= self.n:
            raise ValueError("arc length out of range")
        if not 0 <= self.capped <= 2:
            raise ValueError("capped count out of range")

    @property
    def end(self) -> int:
        """Last covered node."""
        return (self.start + self.length - 1) % self.n

    @property
    def whole_ring(self) -> bool:
        return self.length == self.n

    def nodes(self) -> Tuple[int, ...]:
        return tuple((self.start + i) % self.n for i in range(self.length))


def single_aggregate(n: int, node: int, bit: int) -> TokenAggregate:
    return TokenAggregate(n, node, 1, bit, bit, 0)


def _sat(count: int) -> int:
    return count if count < 2 else 2


def agg_merge(a: TokenAggregate, b: TokenAggregate) -> TokenAggregate:
    """Stitch two views of the same round, ``b`` extending ``a`` clockwise.

    The arcs must touch: either disjoint with b starting right after a ends
    (the stitched boundary pair may add one token) or overlapping in exactly
    the single shared endpoint node. If the union closes the full ring, the
    wrap-around pair is counted as well. Anything else is refused; the
    caller keeps its own view and retries next round.
    """
    if a.n != b.n:
        raise ProtocolError("aggregates describe different ring sizes")
    n = a.n
    if b.start == (a.end + 1) % n and a.length + b.length <= n:
        stitch = 1 if a.last_bit == b.first_bit else 0
        length = a.length + b.length
        capped = _sat(a.capped + b.capped + stitch)
    elif b.start == a.end and a.length + b.length - 1 <= n:
        # Shared endpoint node; its bit is counted once, no new pair appears.
        length = a.length + b.length - 1
        capped = _sat(a.capped + b.capped)
    else:
        raise ProtocolError(
            f"arcs [{a.start}+{a.length}] and [{b.start}+{b.length}] cannot be stitched"
        )
    if length == n:
        # Closing the ring adds the wrap-around pair (last node, first node).
        wrap = 1 if b.last_bit == a.first_bit else 0
        capped = _sat(capped + wrap)
    return TokenAggregate(n, a.start, length, a.first_bit, b.last_bit, capped)


AggregateArray = Tuple[Optional[TokenAggregate], ...]


def empty_aggregates(depth: int) -> AggregateArray:
    return tuple(None for _ in range(depth + 1))


def shift_aggregates(aggs: AggregateArray, n: int, node: int, bit: int) -> AggregateArray:
    """Deepen all slots and seed slot 0 with the node's own one-node arc."""
    return (single_aggregate(n, node, bit),) + aggs[:-1]


def extend_aggregates(
    mine: AggregateArray,
    left: AggregateArray,
    right: AggregateArray,
    n: int,
    node: int,
) -> AggregateArray:
    """Grow every slot's arc by one node on each side using neighbor digests.

    The left neighbor's slot-j arc starts one node before mine and its first
    bit is exactly the bit needed to stitch my arc leftward; symmetrically
    on the right. Slots whose geometry does not line up (corrupted data or
    not yet populated) are left alone and stay incomplete, which keeps the
    detector verdict false until the slot is discarded or filled.
    """
    out = [mine[0]]
    for j in range(1, len(mine)):
        agg = mine[j]
        if agg is None:
            out.append(None)
            continue
        la, ra = left[j], right[j]
        if la is not None and not agg.whole_ring and la.start == (agg.start - 1) % n:
            agg = agg_merge(single_aggregate(n, la.start, la.first_bit), agg)
        if ra is not None and not agg.whole_ring and ra.end == (agg.end + 1) % n:
            agg = agg_merge(agg, single_aggregate(n, ra.end, ra.last_bit))
        out.append(agg)
    return tuple(out)


def aggregate_verdict(aggs: AggregateArray) -> bool:
    """True iff the deepest digest covers the whole ring with exactly one token."""
    deepest = aggs[-1]
    return deepest is not None and deepest.whole_ring and deepest.capped == 1


# ---------------------------------------------------------------------------
# Randomness store for the at-least-one-detector variant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandStore:
    """Per-depth map of generator id -> one word per system node.

    Rides along with the history array under the same shift/merge mechanics.
    A generator only deposits words for rounds in which its own detector
    returned false, so once every detector goes quiet the store drains.
    """

    slots: Tuple[Mapping[int, Tuple[RandWord, ...]], ...]

    @property
    def depth(self) -> int:
        return len(self.slots) - 1


def empty_store(depth: int) -> RandStore:
    return RandStore(tuple({} for _ in range(depth + 1)))


def store_shift(store: RandStore, generator: int, words: Optional[Tuple[RandWord, ...]]) -> RandStore:
    """Deepen all slots; deposit the generator's fresh words at slot 0, if any."""
    head: Dict[int, Tuple[RandWord, ...]] = {} if words is None else {generator: words}
    return RandStore((head,) + store.slots[:-1])


def store_merge(mine: RandStore, theirs: RandStore) -> RandStore:
    if len(mine.slots) != len(theirs.slots):
        raise ProtocolError("randomness store length mismatch")
    return RandStore(tuple(t | m for m, t in zip(mine.slots, theirs.slots)))


def weak_rand(store: RandStore, p: int, width: Optional[int] = None) -> RandWord:
    """XOR of every generator's deepest-slot word addressed to node p.

    Generators that stored nothing contribute the zero word, so the result
    of an empty store is the zero word.
    """
    deepest = store.slots[-1]
    return xor_combine((words[p] for words in deepest.values() if p < len(words)), width)
