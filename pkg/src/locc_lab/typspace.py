"""Strongly typical sets, compression codebooks and block partitions."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .locc import LoccSession, Party, Register

ENUMERATION_CAP = 2**20


class EmptyTypicalSet(ValueError):
    """No string of the requested length meets the frequency window."""


def _check_dist(p: Sequence[float]) -> tuple[float, ...]:
    p = tuple(float(x) for x in p)
    if not p or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector: {p}")
    return p


def _admissible(count: int, n: int, prob: float, delta: float) -> bool:
    return abs(count / n - prob) <= delta + 1e-12


def _compositions(n: int, k: int) -> Iterable[tuple[int, ...]]:
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def _type_classes(p, n, delta):
    for counts in _compositions(n, len(p)):
        if all(_admissible(c, n, ps, delta) for c, ps in zip(counts, p)):
            yield counts


@dataclass(frozen=True)
class TypicalSet:
    """Length-``n`` strings whose per-symbol frequencies lie within ``delta`` of ``p``.

    Members are kept in lexicographic order, which doubles as the codebook
    order.
    """

    p: tuple[float, ...]
    n: int
    delta: float
    members: tuple[tuple[int, ...], ...]

    @property
    def alphabet_size(self) -> int:
        return len(self.p)

    def __len__(self) -> int:
        return len(self.members)

    def basis_indices(self) -> np.ndarray:
        """Mixed-radix index of each member in the n-fold product basis."""
        k = self.alphabet_size
        weights = k ** np.arange(self.n - 1, -1, -1, dtype=np.int64)
        return np.asarray(self.members, dtype=np.int64).reshape(len(self), self.n) @ weights

    def weight(self) -> float:
        return sum(math.prod(self.p[s] for s in x) for x in self.members)


def typical_set(p: Sequence[float], n: int, delta: float) -> TypicalSet:
    p = _check_dist(p)
    if n < 1 or delta < 0:
        raise ValueError("need n >= 1 and delta >= 0")
    if len(p) ** n > ENUMERATION_CAP:
        raise ValueError(f"{len(p)}^{n} strings is too many to enumerate")
    classes = set(_type_classes(p, n, delta))
    members = tuple(
        x for x in itertools.product(range(len(p)), repeat=n)
        if tuple(x.count(s) for s in range(len(p))) in classes
    )
    if not members:
        raise EmptyTypicalSet(f"no typical strings for p={p}, n={n}, delta={delta}")
    return TypicalSet(p, n, float(delta), members)


def support_set(p: Sequence[float], n: int) -> TypicalSet:
    """Every string over the symbols of nonzero probability (exact mode)."""
    p = _check_dist(p)
    symbols = [s for s, ps in enumerate(p) if ps > 0]
    if len(symbols) ** n > ENUMERATION_CAP:
        raise ValueError("support too large to enumerate")
    members = tuple(itertools.product(symbols, repeat=n))
    return TypicalSet(p, n, math.inf, members)


def _log_multinomial(counts) -> float:
    return math.lgamma(sum(counts) + 1) - sum(math.lgamma(c + 1) for c in counts)


def typical_weight(p: Sequence[float], n: int, delta: float) -> float:
    """Probability mass of the typical set, summed over type classes."""
    p = _check_dist(p)
    if n < 1 or delta < 0:
        raise ValueError("need n >= 1 and delta >= 0")
    total, seen = 0.0, False
    for counts in _type_classes(p, n, delta):
        seen = True
        if any(c > 0 and ps == 0 for c, ps in zip(counts, p)):
            continue
        log_w = _log_multinomial(counts) + sum(c * math.log(ps) for c, ps in zip(counts, p) if c)
        total += math.exp(log_w)
    if not seen:
        raise EmptyTypicalSet(f"no typical strings for p={p}, n={n}, delta={delta}")
    return min(total, 1.0)


@dataclass(frozen=True)
class Codebook:
    typical: TypicalSet

    @property
    def D(self) -> int:
        return len(self.typical)

    @property
    def register_dim(self) -> int:
        # registers need dim >= 2; a one-word code wastes one level
        return max(self.D, 2)

    @cached_property
    def _index(self) -> dict[tuple[int, ...], int]:
        return {x: i for i, x in enumerate(self.typical.members)}

    @cached_property
    def basis_indices(self) -> np.ndarray:
        return self.typical.basis_indices()

    def encode(self, x: Sequence[int]) -> int:
        return self._index[tuple(x)]

    def decode(self, i: int) -> tuple[int, ...]:
        return self.typical.members[i]

    def classes(self) -> np.ndarray:
        """0 on codewords, 1 elsewhere, over the n-fold product basis."""
        k, n = self.typical.alphabet_size, self.typical.n
        cls = np.ones(k**n, dtype=np.int64)
        cls[self.basis_indices] = 0
        return cls

    def to_json(self) -> str:
        t = self.typical
        delta = None if math.isinf(t.delta) else t.delta
        return json.dumps({"p": list(t.p), "n": t.n, "delta": delta, "members": [list(m) for m in t.members]})


def build_codebook(p: Sequence[float], n: int, delta: float | None) -> Codebook:
    """``delta=None`` selects exact mode: the whole support, no truncation."""
    return Codebook(support_set(p, n) if delta is None else typical_set(p, n, delta))


def schumacher_compress(session: LoccSession, party: Party, registers: Sequence[Register],
                        codebook: Codebook, name: str = "C") -> tuple[bool, Register | None]:
    """Project onto the codebook subspace and relabel it into one register.

    Returns ``(False, None)`` when the projection fails; the originals are
    then left in place, collapsed onto the complement.
    """
    k = codebook.typical.alphabet_size
    if len(registers) != codebook.typical.n or any(r.dim != k for r in registers):
        raise ValueError("codebook does not match the registers")
    outcome = session.local_measure(party, registers, classes=codebook.classes())
    if outcome != 0:
        return False, None
    pairs = np.column_stack([codebook.basis_indices, np.arange(codebook.D)])
    (reg,) = session.local_relabel(party, registers, [codebook.register_dim], pairs, names=[name])
    return True, reg


def schumacher_decompress(session: LoccSession, party: Party, register: Register, codebook: Codebook,
                          names: Sequence[str] | None = None) -> list[Register]:
    t = codebook.typical
    pairs = np.column_stack([np.arange(codebook.D), codebook.basis_indices])
    return session.local_relabel(party, [register], [t.alphabet_size] * t.n, pairs, names=names)


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint basis-index blocks with fixed per-block weights."""

    universe: int
    blocks: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        weights = tuple(float(w) for w in self.weights)
        if len(blocks) != len(weights):
            raise ValueError("one weight per block required")
        flat = [i for b in blocks for i in b]
        if len(set(flat)) != len(flat):
            raise ValueError("blocks overlap")
        if any(not b for b in blocks):
            raise ValueError("empty block")
        if any(not 0 <= i < self.universe for i in flat):
            raise ValueError("block index outside the universe")
        if any(w < -1e-12 or w > 1 + 1e-12 for w in weights):
            raise ValueError("block weights must lie in [0, 1]")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "weights", weights)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def covered(self) -> tuple[int, ...]:
        return tuple(sorted(i for b in self.blocks for i in b))

    def total_weight(self) -> float:
        return float(sum(self.weights))

    def nonzero(self) -> "BlockPartition":
        """Drop zero-weight blocks; they never carry amplitude."""
        keep = [m for m, w in enumerate(self.weights) if w > 1e-15]
        return BlockPartition(self.universe, [self.blocks[m] for m in keep], [self.weights[m] for m in keep])

    def to_json(self) -> str:
        return json.dumps({"blocks": [list(b) for b in self.blocks], "weights": list(self.weights)})

    @classmethod
    def from_json(cls, text: str, universe: int | None = None) -> "BlockPartition":
        doc = json.loads(text)
        blocks = doc["blocks"]
        if universe is None:
            universe = max(i for b in blocks for i in b) + 1
        return cls(universe, blocks, doc["weights"])


def count_window(n1: int, c_squared: float, delta: float | None) -> list[int]:
    """Admissible numbers of 2's among ``n1`` positions.

    The window [n1(c2 - delta), n1(c2 + delta)] is rounded outward to whole
    counts so that it is never empty; ``delta=None`` keeps every count.
    """
    if delta is None:
        return list(range(n1 + 1))
    lo = max(0, math.floor(n1 * (c_squared - delta) + 1e-12))
    hi = min(n1, math.ceil(n1 * (c_squared + delta) - 1e-12))
    return list(range(lo, hi + 1))


def position_partition(n1: int, c_squared: float, *, counts: Iterable[int] | None = None,
                       delta: float | None = None) -> BlockPartition:
    """Group the 3**n1 ternary strings by where their 2's sit.

    Each block fixes the set P of positions holding a 2; the other positions
    range over {0, 1}. Its weight (c2)^|P| (1 - c2)^(n1 - |P|) does not depend
    on the individual amplitudes on 0 and 1.
    """
    if n1 < 1 or not 0 < c_squared < 1:
        raise ValueError("need n1 >= 1 and 0 < c_squared < 1")
    if counts is None:
        counts = count_window(n1, c_squared, delta)
    counts = sorted(set(int(w) for w in counts))
    place = 3 ** np.arange(n1 - 1, -1, -1)
    blocks, weights = [], []
    for w in counts:
        for pos in itertools.combinations(range(n1), w):
            free = [i for i in range(n1) if i not in pos]
            members = []
            for bits in itertools.product((0, 1), repeat=len(free)):
                digits = np.full(n1, 2)
                digits[free] = bits
                members.append(int(digits @ place))
            blocks.append(sorted(members))
            weights.append(c_squared**w * (1 - c_squared) ** (n1 - w))
    return BlockPartition(3**n1, blocks, weights)


def lcm_of_block_sizes(partition: BlockPartition) -> int:
    if not partition.blocks:
        raise ValueError("partition has no blocks")
    return math.lcm(*partition.sizes)
