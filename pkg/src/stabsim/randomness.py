"""Seeded bit sources, per-node bit metering, and the two production schemes.

``gated_word`` implements detector-gated production: a node draws fresh
random bits only while its convergence detector says the system has not
stabilized; afterwards it feeds the algorithm a deterministic word chosen
by a pluggable policy, and the meter stops moving.

``surrogate_round`` implements the Byzantine-tolerant variant: a node that
suspects non-convergence acts as a randomness surrogate and sends one fresh
word to every node; each receiver XORs everything it received, so a single
honest surrogate makes every node's input uniformly random no matter what
the other senders (including Byzantine ones) contribute.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple


@dataclass(frozen=True, slots=True)
class RandWord:
    """Fixed-width bit vector; ``bottom`` marks the explicit no-contribution word.

    A bottom word XORs as zero but is distinguishable on the wire from an
    all-zeros word.
    """

    width: int
    value: int = 0
    bottom: bool = False

    def __post_init__(self) -> None:
        if self.width < 0:
            raise ValueError("width must be non-negative")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value} does not fit in {self.width} bits")

    def bits(self) -> Tuple[int, ...]:
        return tuple((self.value >> (self.width - 1 - i)) & 1 for i in range(self.width))


BOTTOM = RandWord(0, 0, True)


class BitSource:
    """Seeded deterministic bit stream.

    Bits are generated one at a time, so the pair (seed, position) fully
    determines the next bit regardless of how draws are chunked. A true
    entropy source could be swapped in behind the same interface, at the
    cost of reproducibility.
    """

    __slots__ = ("seed", "position", "_rng")

    def __init__(self, seed: int):
        self.seed = seed
        self.position = 0
        self._rng = random.Random(seed)

    def take(self, k: int) -> int:
        """Next k bits as an integer (first bit drawn is the most significant)."""
        if k < 0:
            raise ValueError("bit count must be non-negative")
        value = 0
        rng = self._rng
        for _ in range(k):
            value = (value << 1) | rng.getrandbits(1)
        self.position += k
        return value


class RandMeter:
    """Cumulative count of random bits drawn, per node."""

    __slots__ = ("counts",)

    def __init__(self, n: int):
        self.counts = [0] * n

    def add(self, owner: int, k: int) -> None:
        self.counts[owner] += k

    def snapshot(self) -> Tuple[int, ...]:
        return tuple(self.counts)

    def total(self) -> int:
        return sum(self.counts)


def draw(source: BitSource, k: int, meter: RandMeter, owner: int) -> RandWord:
    """Draw k fresh bits for ``owner`` and meter them."""
    value = source.take(k)
    if k:
        meter.add(owner, k)
    return RandWord(k, value)


def xor_combine(words: Iterable[Optional[RandWord]], width: Optional[int] = None) -> RandWord:
    """Bitwise XOR of the given words; bottom and missing words contribute zero.

    All non-bottom words must share one width. The width of the result is
    taken from the inputs, or from ``width`` when only bottoms are present.
    """
    acc = 0
    w = width
    for word in words:
        if word is None or word.bottom:
            continue
        if w is None:
            w = word.width
        elif word.width != w:
            raise ValueError(f"word width {word.width} != {w}")
        acc ^= word.value
    return RandWord(w or 0, acc)


class InputPolicy:
    """Deterministic word fed to the algorithm after convergence is detected."""

    name = "policy"

    def word(self, width: int, state: Any = None) -> RandWord:
        raise NotImplementedError


class ConstantOnesPolicy(InputPolicy):
    name = "constant-ones"

    def word(self, width: int, state: Any = None) -> RandWord:
        return RandWord(width, (1 << width) - 1)


class ZerosPolicy(InputPolicy):
    name = "zeros"

    def word(self, width: int, state: Any = None) -> RandWord:
        return RandWord(width, 0)


class KeepBitPolicy(InputPolicy):
    """Feed back the node's own current bit; keeps a held token moving."""

    name = "keep-bit"

    def word(self, width: int, state: Any = None) -> RandWord:
        bit = int(state) & 1
        return RandWord(width, bit * ((1 << width) - 1) if width else 0)


POLICIES: Dict[str, InputPolicy] = {
    p.name: p for p in (ConstantOnesPolicy(), ZerosPolicy(), KeepBitPolicy())
}


def gated_word(
    last_verdict: Optional[bool],
    source: BitSource,
    width: int,
    policy: InputPolicy,
    meter: RandMeter,
    owner: int,
    state: Any = None,
) -> RandWord:
    """Detector-gated bit production for one round.

    A false (or still unknown) verdict from the most recently terminated
    detector instance yields a fresh metered word; a true verdict yields the
    policy's deterministic word and no bits are drawn.
    """
    if last_verdict:
        return policy.word(width, state)
    return draw(source, width, meter, owner)


def sanitize_word(value: Any, width: int) -> RandWord:
    """Coerce an arbitrary received payload into a word of the given width.

    Byzantine senders may put anything on the wire; any well-formed bits are
    kept (truncated to width), everything else degrades to bottom, which is
    harmless under XOR.
    """
    if isinstance(value, RandWord):
        if value.bottom:
            return BOTTOM
        if value.width == width:
            return value
        return RandWord(width, value.value & ((1 << width) - 1))
    return BOTTOM


def surrogate_round(
    my_verdict: Optional[bool],
    source: BitSource,
    meter: RandMeter,
    owner: int,
    received: Mapping[int, Any],
    n: int,
    width: int,
) -> Tuple[Dict[int, RandWord], RandWord]:
    """One surrogate exchange: produce outgoing words, combine received ones.

    On a false (or unknown) verdict the owner sends an independent fresh
    word to every node including itself; on true it sends bottom. The
    returned ``r`` is the XOR of the words received this round, one per
    node, with missing or malformed senders contributing zero.
    """
    if my_verdict:
        outgoing = {j: BOTTOM for j in range(n)}
    else:
        outgoing = {j: draw(source, width, meter, owner) for j in range(n)}
    r = xor_combine((sanitize_word(received.get(j), width) for j in range(n)), width)
    return outgoing, r


@dataclass(frozen=True, slots=True)
class Pipeline:
    """Staged detector outputs for protocols whose detectors take whole rounds.

    An instance started at round t has its output available from round
    t + latency onward; ``latest`` returns the output of the most recent
    instance that has terminated by the given round.
    """

    latency: int
    entries: Tuple[Tuple[int, Any], ...] = ()

    def push(self, start_round: int, output: Any) -> "Pipeline":
        entries = self.entries + ((start_round, output),)
        # Only the newest few can ever be selected again.
        if len(entries) > self.latency + 2:
            entries = entries[-(self.latency + 2):]
        return Pipeline(self.latency, entries)

    def latest(self, current_round: int) -> Any:
        for start, output in reversed(self.entries):
            if start + self.latency <= current_round:
                return output
        return None
