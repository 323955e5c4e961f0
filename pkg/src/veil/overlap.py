"""Overlapping padding over a circulant d-regular graph of buckets.

Pipeline: graph creation, maximum overlap bound, edge directions, fake
addition, label creation and well-formed bucket finalization, plus the
fixed-overlap post-process that makes the overlap independent of the data.

Neighbor functions use the order ``+1 .. +floor(d/2)``, ``-1 .. -floor(d/2)``
and, for odd ``d``, ``+n/2`` last. A lender's k-th neighbor borrows the
lender's slots ``(k-1)*delta .. k*delta - 1`` (0-based).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bucketizer import BucketSet
from .core import Record, VeilError


class ParityError(VeilError, ValueError):
    pass


class GraphError(VeilError, ValueError):
    pass


class NegativeFakeCount(VeilError, RuntimeError):
    pass


class LenderTooSmall(VeilError, ValueError):
    pass


class OverlapInfeasible(VeilError, ValueError):
    pass


class NeighborFunctions:
    """The ordered family F_1..F_d; ``F(j, p)`` is the j-th neighbor of bucket p."""

    def __init__(self, n: int, d: int):
        if d < 1:
            raise GraphError("degree must be >= 1")
        if d >= n:
            raise GraphError(f"degree {d} needs more than {n} buckets")
        if d % 2 and n % 2:
            raise ParityError(f"no {d}-regular graph on {n} vertices")
        half = d // 2
        offsets = list(range(1, half + 1)) + [-i for i in range(1, half + 1)]
        if d % 2:
            offsets.append(n // 2)
        self.n, self.d = n, d
        self.offsets = offsets
        self._index = {off % n: k for k, off in enumerate(offsets, 1)}

    def __call__(self, j: int, p: int) -> int:
        return (p + self.offsets[j - 1]) % self.n

    def neighbors(self, p: int) -> list[int]:
        return [(p + off) % self.n for off in self.offsets]

    def index_of(self, q: int, p: int) -> int:
        """The k with F_k(q) == p."""
        try:
            return self._index[(p - q) % self.n]
        except KeyError:
            raise GraphError(f"bucket {p} is not a neighbor of {q}") from None


def graph_create(n: int, d: int, repair: bool = False) -> tuple[np.ndarray, NeighborFunctions]:
    """Adjacency matrix and neighbor functions of the circulant d-regular graph.

    With ``repair`` an odd ``n`` paired with an odd ``d`` grows to ``n + 1``.
    """
    if repair and d % 2 and n % 2:
        n += 1
    nf = NeighborFunctions(n, d)
    adj = np.zeros((n, n), dtype=bool)
    for p in range(n):
        for q in nf.neighbors(p):
            adj[p, q] = True
    return adj, nf


def overlap_bounds(sizes: list[int], nf: NeighborFunctions, bucket_size: int) -> tuple[float, int, int]:
    """The three upper bounds on the overlap size; the first is ``inf`` without full buckets."""
    d = nf.d
    full_bound = math.inf
    for p, size in enumerate(sizes):
        if size == bucket_size:
            largest = max(sizes[q] for q in nf.neighbors(p))
            full_bound = min(full_bound, bucket_size - largest)
    return full_bound, bucket_size // d, (bucket_size - min(sizes)) // d


def max_overlap(sizes: list[int], nf: NeighborFunctions, bucket_size: int) -> int:
    return int(min(overlap_bounds(sizes, nf, bucket_size)))


def _edge(p: int, q: int) -> tuple[int, int]:
    return (p, q) if p < q else (q, p)


def _assign_directions(sizes, nf, delta, bucket_size):
    n = nf.n
    load = list(sizes)
    lender: dict[tuple[int, int], int] = {}
    for j in sorted(range(n), key=lambda p: (sizes[p], p)):
        # stable sort keeps F-order among equally sized neighbors
        for p in sorted(nf.neighbors(j), key=lambda q: -sizes[q]):
            e = _edge(j, p)
            if e in lender:
                continue
            if load[j] + delta <= bucket_size:
                lender[e] = p
                load[j] += delta
            else:
                lender[e] = j
                if load[p] + delta > bucket_size:
                    return None
                load[p] += delta
    return lender


def edge_directions(sizes: list[int], nf: NeighborFunctions, delta_max: int,
                    bucket_size: int) -> tuple[dict[tuple[int, int], int], int]:
    """Direct every edge; returns ``({edge: lender}, delta)``.

    Buckets are visited smallest first and borrow from their largest
    neighbors while they have room. If lending would overflow a receiver the
    whole pass restarts with ``delta - 1``.
    """
    delta = max(int(delta_max), 0)
    while True:
        lender = _assign_directions(sizes, nf, delta, bucket_size)
        if lender is not None:
            return lender, delta
        delta -= 1


@dataclass
class OverlapPlan:
    nf: NeighborFunctions
    lender: dict[tuple[int, int], int]
    delta: int
    bounds: tuple[float, int, int] = (math.inf, 0, 0)
    labels: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.nf.n

    @property
    def d(self) -> int:
        return self.nf.d

    def lenders_of(self, p: int) -> list[int]:
        """Buckets p borrows from, in p's neighbor order."""
        return [q for q in self.nf.neighbors(p) if self.lender[_edge(p, q)] == q]

    def borrowers_of(self, q: int) -> list[int]:
        return [p for p in self.nf.neighbors(q) if self.lender[_edge(p, q)] == q]

    def in_degree(self, p: int) -> int:
        return len(self.lenders_of(p))

    def directed_matrix(self) -> np.ndarray:
        """``M[q, p]`` is True when q lends to p."""
        m = np.zeros((self.n, self.n), dtype=bool)
        for (a, b), q in self.lender.items():
            m[q, b if q == a else a] = True
        return m

    def adjacency(self) -> np.ndarray:
        m = self.directed_matrix()
        return m | m.T


def add_fakes(bs: BucketSet, plan: OverlapPlan) -> list[int]:
    """Pad each bucket to ``bucket_size - delta * in_degree`` slots; returns fakes added per bucket."""
    added = []
    for b in bs.buckets:
        target = bs.bucket_size - plan.delta * plan.in_degree(b.id)
        missing = target - len(b.slots)
        if missing < 0:
            raise NegativeFakeCount(f"bucket {b.id} cannot absorb {plan.in_degree(b.id)} incoming edges")
        b.slots.extend(bs.new_fake() for _ in range(missing))
        added.append(missing)
    return added


def create_labels(bs: BucketSet, plan: OverlapPlan, strict: bool = True) -> dict[tuple[int, int], tuple[int, ...]]:
    """Slot indices each lender shares with each borrower, keyed both ways.

    When ``strict`` is off, a lender too small for the neighbor-index rule
    hands out consecutive ranges to its borrowers instead; the ranges stay
    disjoint either way.
    """
    delta = plan.delta
    labels: dict[tuple[int, int], tuple[int, ...]] = {}
    if delta == 0:
        return labels
    for q in range(plan.n):
        borrowers = plan.borrowers_of(q)
        if not borrowers:
            continue
        size = len(bs.buckets[q].slots)
        ks = {p: plan.nf.index_of(q, p) for p in borrowers}
        if max(ks.values()) * delta > size:
            if strict:
                raise LenderTooSmall(f"bucket {q} has {size} slots, needs {max(ks.values()) * delta}")
            ks = {p: i for i, p in enumerate(sorted(borrowers, key=ks.get), 1)}
        for p, k in ks.items():
            slots = tuple(range((k - 1) * delta, k * delta))
            labels[(q, p)] = labels[(p, q)] = slots
    return labels


def finalize_overlap(bs: BucketSet, plan: OverlapPlan) -> BucketSet:
    """Attach borrowed records to every borrower according to the labels."""
    for b in bs.buckets:
        b.borrowed = []
    if plan.delta == 0:
        return bs
    for p in range(plan.n):
        for q in plan.lenders_of(p):
            lent = bs.buckets[q].slots
            bs.buckets[p].borrowed.extend(lent[i] for i in plan.labels[(q, p)])
    return bs


def pad_overlap(bs: BucketSet, d: int, strict_labels: bool = False) -> BucketSet:
    """Run the whole overlapping padding pipeline on freshly created buckets."""
    sizes = bs.sizes()
    _, nf = graph_create(bs.n, d)
    bounds = overlap_bounds(sizes, nf, bs.bucket_size)
    lender, delta = edge_directions(sizes, nf, int(min(bounds)), bs.bucket_size)
    plan = OverlapPlan(nf, lender, delta, bounds)
    add_fakes(bs, plan)
    plan.labels = create_labels(bs, plan, strict=strict_labels)
    bs.overlap = plan
    return finalize_overlap(bs, plan)


def apply_desired_overlap(bs: BucketSet, desired: int) -> BucketSet:
    """Rebuild the overlap with exactly ``desired`` shared records per edge.

    Edge directions are kept. A borrower first trades fake slots for extra
    borrowed records; once it runs out of fakes, its most recently placed
    real records move to the stash.
    """
    plan = bs.overlap
    if plan is None:
        raise ValueError("bucket set has no overlap plan")
    if desired < 0 or desired * plan.d > bs.bucket_size:
        raise OverlapInfeasible(f"overlap {desired} does not fit {plan.d} neighbors in {bs.bucket_size} slots")
    for b in bs.buckets:
        home = b.home
        room = bs.bucket_size - desired * plan.in_degree(b.id)
        if len(home) > room:
            bs.stash.extend(home[room:])
            home = home[:room]
        b.slots = home + [bs.new_fake() for _ in range(room - len(home))]
        b.borrowed = []
    plan.delta = desired
    plan.labels = create_labels(bs, plan, strict=False)
    return finalize_overlap(bs, plan)
