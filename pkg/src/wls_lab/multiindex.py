"""Multi-indices over countably many variables and downward-closed index sets.

A multi-index is a finitely supported sequence of nonnegative integers. Only
the nonzero entries are stored, keyed by 1-based position.
"""
from __future__ import annotations

from typing import Callable, Iterable, Iterator, Mapping, Sequence


class MultiIndex:
    """Immutable sparse multi-index.

    ``entries`` is a tuple of ``(position, exponent)`` pairs sorted by
    position, positions are 1-based and exponents are >= 1.
    """

    __slots__ = ("entries", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        clean: dict[int, int] = {}
        for pos, exp in items:
            pos, exp = int(pos), int(exp)
            if pos < 1:
                raise ValueError(f"positions are 1-based, got {pos}")
            if exp < 0:
                raise ValueError(f"negative exponent {exp} at position {pos}")
            if exp:
                clean[pos] = exp
        self.entries: tuple[tuple[int, int], ...] = tuple(sorted(clean.items()))
        self._hash = hash(self.entries)

    @classmethod
    def zero(cls) -> MultiIndex:
        return cls()

    @classmethod
    def unit(cls, j: int, k: int = 1) -> MultiIndex:
        """The index ``k * e_j``."""
        return cls({j: k})

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> MultiIndex:
        return cls((j + 1, v) for j, v in enumerate(values))

    def __getitem__(self, j: int) -> int:
        for pos, exp in self.entries:
            if pos == j:
                return exp
        return 0

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self.entries:
            return "MultiIndex(0)"
        inner = " + ".join(f"{e}e{p}" if e > 1 else f"e{p}" for p, e in self.entries)
        return f"MultiIndex({inner})"

    @property
    def degree(self) -> int:
        """Total degree |nu|_1."""
        return sum(e for _, e in self.entries)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.entries)

    @property
    def max_position(self) -> int:
        return self.entries[-1][0] if self.entries else 0

    def as_dict(self) -> dict[int, int]:
        return dict(self.entries)

    def to_dense(self, length: int) -> list[int]:
        if self.max_position > length:
            raise ValueError(f"support reaches position {self.max_position} > {length}")
        out = [0] * length
        for p, e in self.entries:
            out[p - 1] = e
        return out

    def add_unit(self, j: int) -> MultiIndex:
        d = self.as_dict()
        d[j] = d.get(j, 0) + 1
        return MultiIndex(d)

    def sub_unit(self, j: int) -> MultiIndex:
        d = self.as_dict()
        if d.get(j, 0) < 1:
            raise ValueError(f"{self!r} has no entry at position {j}")
        d[j] -= 1
        return MultiIndex(d)

    def predecessors(self) -> Iterator[MultiIndex]:
        """The indices ``nu - e_j`` for every j in the support."""
        for p, _ in self.entries:
            yield self.sub_unit(p)

    def revlex_key(self) -> tuple[tuple[int, int], ...]:
        # highest position first, so indices living on coarser variables come first
        return tuple(reversed(self.entries))

    def to_text(self) -> str:
        return " ".join(f"{p}:{e}" for p, e in self.entries)

    @classmethod
    def from_text(cls, line: str) -> MultiIndex:
        pairs = []
        for tok in line.split():
            p, _, e = tok.partition(":")
            if not e:
                raise ValueError(f"malformed token {tok!r}")
            pairs.append((int(p), int(e)))
        return cls(pairs)


def leq(a: MultiIndex, b: MultiIndex) -> bool:
    """Componentwise order: ``a_j <= b_j`` for every position j."""
    bd = b.as_dict()
    return all(e <= bd.get(p, 0) for p, e in a.entries)


def canonical_key(nu: MultiIndex, weight: Callable[[MultiIndex], float] | None = None):
    """Sort key of the canonical total order.

    Total degree first, then the weight (ascending) when one is supplied, then
    reverse-lexicographic on the entries.
    """
    if weight is None:
        return (nu.degree, nu.revlex_key())
    return (nu.degree, weight(nu), nu.revlex_key())


class IndexSet:
    """Ordered, duplicate-free collection of multi-indices.

    Downward closedness is checked on construction unless ``check=False``.
    """

    def __init__(self, members: Iterable[MultiIndex], check: bool = True):
        self.members: tuple[MultiIndex, ...] = tuple(members)
        self._pos = {nu: i for i, nu in enumerate(self.members)}
        if len(self._pos) != len(self.members):
            raise ValueError("index set contains duplicates")
        if check and not is_downward_closed(self):
            raise ValueError("index set is not downward closed")

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.members)

    def __contains__(self, nu: object) -> bool:
        return nu in self._pos

    def __getitem__(self, i: int) -> MultiIndex:
        return self.members[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return set(self.members) == set(other.members)

    def __repr__(self) -> str:
        return f"IndexSet(n={len(self)})"

    def position(self, nu: MultiIndex) -> int:
        return self._pos[nu]

    @property
    def max_position(self) -> int:
        return max((nu.max_position for nu in self.members), default=0)

    @property
    def max_degree(self) -> int:
        """Largest univariate exponent appearing in the set."""
        return max((e for nu in self.members for _, e in nu.entries), default=0)

    def max_degree_at(self, j: int) -> int:
        return max((nu[j] for nu in self.members), default=0)

    def sorted(self, weight: Callable[[MultiIndex], float] | None = None) -> IndexSet:
        return IndexSet(sorted(self.members, key=lambda nu: canonical_key(nu, weight)),
                        check=False)

    def to_text(self) -> str:
        return "".join(nu.to_text() + "\n" for nu in self.members)

    @classmethod
    def from_text(cls, text: str, check: bool = True) -> IndexSet:
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls((MultiIndex.from_text(line) for line in lines), check=check)


def is_downward_closed(index_set: IndexSet | Iterable[MultiIndex]) -> bool:
    members = index_set if isinstance(index_set, IndexSet) else IndexSet(index_set, check=False)
    return all(pred in members for nu in members for pred in nu.predecessors())


def reduced_margin(index_set: IndexSet, J: int) -> list[MultiIndex]:
    """Indices outside the set whose every predecessor is inside.

    Enumeration is restricted to positions 1..J.
    """
    if not is_downward_closed(index_set):
        raise ValueError("reduced margin requires a downward-closed set")
    if len(index_set) == 0:
        return [MultiIndex.zero()]
    found = set()
    for nu in index_set:
        for j in range(1, J + 1):
            cand = nu.add_unit(j)
            if cand in index_set or cand in found:
                continue
            if all(p in index_set for p in cand.predecessors()):
                found.add(cand)
    return sorted(found, key=canonical_key)
