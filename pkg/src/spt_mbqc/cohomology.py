"""Exact 3-cocycles, homogeneous 3-cochains and coboundaries over U(1).

Every phase is a root of unity exp(2 pi i num / order) and is stored as the
integer ``num``. Tables are integer numpy arrays indexed by group-element
indices (see :class:`~spt_mbqc.groups.FiniteGroup`), so the cocycle checks
below are exact and carry no tolerance.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .groups import FiniteGroup, GroupElement, GroupError, GroupSpec, is_generator


class CohomologyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PhaseExponent:
    """The phase exp(2 pi i num / order), kept exact."""

    num: int
    order: int

    def __post_init__(self):
        if self.order <= 0:
            raise CohomologyError(f"phase order must be positive, got {self.order}")
        object.__setattr__(self, "num", int(self.num) % int(self.order))
        object.__setattr__(self, "order", int(self.order))

    @classmethod
    def one(cls) -> PhaseExponent:
        return cls(0, 1)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.num, self.order)

    def reduced(self) -> PhaseExponent:
        f = self.fraction
        return PhaseExponent(f.numerator, f.denominator)

    def rescale(self, order: int) -> PhaseExponent:
        if order % self.order:
            raise CohomologyError(f"cannot express 1/{self.order} roots with order {order}")
        return PhaseExponent(self.num * (order // self.order), order)

    def __mul__(self, other: PhaseExponent) -> PhaseExponent:
        order = math.lcm(self.order, other.order)
        return PhaseExponent(self.rescale(order).num + other.rescale(order).num, order)

    def __truediv__(self, other: PhaseExponent) -> PhaseExponent:
        return self * other.inverse()

    def __pow__(self, k: int) -> PhaseExponent:
        return PhaseExponent(self.num * k, self.order)

    def inverse(self) -> PhaseExponent:
        return PhaseExponent(-self.num, self.order)

    def is_one(self) -> bool:
        return self.num == 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhaseExponent):
            return NotImplemented
        return self.fraction == other.fraction

    def __hash__(self) -> int:
        return hash(self.fraction)

    def __complex__(self) -> complex:
        return cmath.exp(2j * cmath.pi * self.num / self.order)

    def value(self) -> complex:
        return complex(self)

    def __repr__(self) -> str:
        return f"PhaseExponent({self.num}/{self.order})"

    def to_json(self) -> dict:
        r = self.reduced()
        return {"num": r.num, "order": r.order}


def _common(order_a: int, order_b: int) -> tuple[int, int, int]:
    order = math.lcm(order_a, order_b)
    return order, order // order_a, order // order_b


@dataclass(frozen=True, eq=False)
class Cocycle3:
    """Inhomogeneous 3-cochain G^3 -> U(1); call it a cocycle once checked."""

    group: FiniteGroup
    order: int
    table: np.ndarray
    label: object = None

    def __post_init__(self):
        n = self.group.order
        table = np.asarray(self.table, dtype=np.int64)
        if table.shape != (n, n, n):
            raise CohomologyError(f"cocycle table has shape {table.shape}, expected {(n, n, n)}")
        object.__setattr__(self, "table", table % self.order)

    def __call__(self, g1, g2, g3) -> PhaseExponent:
        G = self.group
        return PhaseExponent(int(self.table[G.index(g1), G.index(g2), G.index(g3)]), self.order)

    def __mul__(self, other: Cocycle3) -> Cocycle3:
        if other.group != self.group:
            raise GroupError("cocycles live on different groups")
        order, sa, sb = _common(self.order, other.order)
        return Cocycle3(self.group, order, self.table * sa + other.table * sb)

    def perturbed(self, g1: int, g2: int, g3: int, delta: int = 1) -> Cocycle3:
        table = self.table.copy()
        table[g1, g2, g3] += delta
        return Cocycle3(self.group, self.order, table, label=("perturbed", self.label))


@dataclass(frozen=True, eq=False)
class Cochain3:
    """Homogeneous 3-cochain G^4 -> U(1)."""

    group: FiniteGroup
    order: int
    table: np.ndarray

    def __post_init__(self):
        n = self.group.order
        table = np.asarray(self.table, dtype=np.int64)
        if table.shape != (n,) * 4:
            raise CohomologyError(f"cochain table has shape {table.shape}, expected {(n,) * 4}")
        object.__setattr__(self, "table", table % self.order)

    def __call__(self, g0, g1, g2, g3) -> PhaseExponent:
        G = self.group
        idx = tuple(G.index(g) for g in (g0, g1, g2, g3))
        return PhaseExponent(int(self.table[idx]), self.order)

    def __mul__(self, other: Cochain3) -> Cochain3:
        order, sa, sb = _common(self.order, other.order)
        return Cochain3(self.group, order, self.table * sa + other.table * sb)


@dataclass(frozen=True, eq=False)
class TwoCochain:
    """Inhomogeneous 2-cochain G^2 -> U(1)."""

    group: FiniteGroup
    order: int
    table: np.ndarray

    def __post_init__(self):
        n = self.group.order
        table = np.asarray(self.table, dtype=np.int64)
        if table.shape != (n, n):
            raise CohomologyError(f"2-cochain table has shape {table.shape}, expected {(n, n)}")
        object.__setattr__(self, "table", table % self.order)

    @classmethod
    def random(cls, group: FiniteGroup, order: int, rng: np.random.Generator) -> TwoCochain:
        n = group.order
        return cls(group, order, rng.integers(0, order, size=(n, n)))

    def homogeneous(self) -> np.ndarray:
        """mu(g0, g1, g2) = mu(g0^-1 g1, g1^-1 g2) as an (n, n, n) table."""
        G = self.group
        n = G.order
        i0, i1, i2 = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        a = G.mul_table[G.inv_table[i0], i1]
        b = G.mul_table[G.inv_table[i1], i2]
        return self.table[a, b]


@dataclass
class CocycleReport:
    passed: bool
    checked: int
    violation: tuple | None = None
    residue: int | None = None
    order: int = 1
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        out = {"passed": self.passed, "checked": self.checked, "order": self.order}
        if self.violation is not None:
            out["violation"] = list(self.violation)
            out["residue"] = self.residue
        out.update(self.details)
        return out


# ---------------------------------------------------------------------------
# constructions


def standard_cocycle(group: FiniteGroup | GroupSpec, c) -> Cocycle3:
    """The Z_d family exp(2 pi i c [g1] ([g2] + [g3] - [g2 + g3]) / d^2).

    For a direct product ``c`` may be a tuple, one parameter per factor; the
    result is the product of the pulled-back factor cocycles.
    """
    if isinstance(group, GroupSpec):
        group = FiniteGroup(group)
    spec = group.spec
    cs = (c,) if not isinstance(c, (tuple, list)) else tuple(c)
    if len(cs) != len(spec.factors):
        if spec.is_cyclic:
            raise CohomologyError(f"expected a single integer c for {spec}")
        raise CohomologyError(
            f"non-cyclic group {spec} needs one parameter per factor, got {cs}"
        )
    for ci, d in zip(cs, spec.factors):
        if not 0 <= int(ci) < d:
            raise CohomologyError(f"c={ci} out of range [0, {d}) for factor Z{d}")
    order = math.lcm(*(d * d for d in spec.factors))
    coords = np.array([g.coords for g in group.elements], dtype=np.int64)
    n = group.order
    table = np.zeros((n, n, n), dtype=np.int64)
    for axis, (ci, d) in enumerate(zip(cs, spec.factors)):
        x = coords[:, axis]
        g1 = x[:, None, None]
        g2 = x[None, :, None]
        g3 = x[None, None, :]
        carry = g2 + g3 - (g2 + g3) % d
        table += int(ci) * g1 * carry * (order // (d * d))
    return Cocycle3(group, order, table, label=cs if len(cs) > 1 else cs[0])


def trivial_cocycle(group: FiniteGroup) -> Cocycle3:
    n = group.order
    return Cocycle3(group, 1, np.zeros((n, n, n), dtype=np.int64), label=0)


def _four_tuples(n: int):
    return np.meshgrid(*(np.arange(n),) * 4, indexing="ij")


def coboundary_residue(w: Cocycle3) -> np.ndarray:
    """d w evaluated on all of G^4 as exponents modulo w.order."""
    G = w.group
    M = G.mul_table
    t = w.table
    g1, g2, g3, g4 = _four_tuples(G.order)
    res = (
        t[g2, g3, g4]
        + t[g1, M[g2, g3], g4]
        + t[g1, g2, g3]
        - t[M[g1, g2], g3, g4]
        - t[g1, g2, M[g3, g4]]
    )
    return res % w.order


def _first_violation(res: np.ndarray) -> tuple[tuple | None, int | None]:
    bad = np.argwhere(res != 0)
    if len(bad) == 0:
        return None, None
    idx = tuple(int(i) for i in bad[0])
    return idx, int(res[idx])


def check_cocycle_condition(w: Cocycle3) -> CocycleReport:
    """Exact check of the five-term 3-cocycle condition on every 4-tuple."""
    res = coboundary_residue(w)
    violation, residue = _first_violation(res)
    return CocycleReport(violation is None, res.size, violation, residue, w.order)


def cocycle_to_cochain(w: Cocycle3) -> Cochain3:
    """nu(g0, g1, g2, g3) = w(g0^-1 g1, g1^-1 g2, g2^-1 g3)."""
    G = w.group
    M, I = G.mul_table, G.inv_table
    g0, g1, g2, g3 = _four_tuples(G.order)
    table = w.table[M[I[g0], g1], M[I[g1], g2], M[I[g2], g3]]
    return Cochain3(G, w.order, table)


def cochain_to_cocycle(nu: Cochain3) -> Cocycle3:
    """w(g1, g2, g3) = nu(1, g1, g1 g2, g1 g2 g3)."""
    G = nu.group
    M = G.mul_table
    n = G.order
    g1, g2, g3 = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    g12 = M[g1, g2]
    table = nu.table[0, g1, g12, M[g12, g3]]
    return Cocycle3(G, nu.order, table)


def check_homogeneity(nu: Cochain3) -> CocycleReport:
    """nu(g g0, .., g g3) == nu(g0, .., g3) for every g and every 4-tuple."""
    G = nu.group
    M = G.mul_table
    g0, g1, g2, g3 = _four_tuples(G.order)
    checked = 0
    for g in range(G.order):
        shifted = nu.table[M[g, g0], M[g, g1], M[g, g2], M[g, g3]]
        diff = (shifted - nu.table) % nu.order
        checked += diff.size
        violation, residue = _first_violation(diff)
        if violation is not None:
            return CocycleReport(False, checked, (g,) + violation, residue, nu.order)
    return CocycleReport(True, checked, order=nu.order)


def check_cochain_condition(nu: Cochain3) -> CocycleReport:
    """Five-term condition for homogeneous cochains on every 5-tuple."""
    G = nu.group
    n = G.order
    t = nu.table
    g = np.meshgrid(*(np.arange(n),) * 5, indexing="ij")
    g0, g1, g2, g3, g4 = g
    res = (
        t[g1, g2, g3, g4]
        + t[g0, g1, g3, g4]
        + t[g0, g1, g2, g3]
        - t[g0, g2, g3, g4]
        - t[g0, g1, g2, g4]
    ) % nu.order
    violation, residue = _first_violation(res)
    return CocycleReport(violation is None, res.size, violation, residue, nu.order)


def coboundary(mu: TwoCochain) -> Cochain3:
    """Alternating-face coboundary of a 2-cochain, as a homogeneous 3-cochain.

    lambda(g0,g1,g2,g3) = mu(g1,g2,g3) mu(g0,g1,g3) / (mu(g0,g2,g3) mu(g0,g1,g2))
    with mu taken in homogeneous form.
    """
    h = mu.homogeneous()
    n = mu.group.order
    g0, g1, g2, g3 = _four_tuples(n)
    table = h[g1, g2, g3] + h[g0, g1, g3] - h[g0, g2, g3] - h[g0, g1, g2]
    return Cochain3(mu.group, mu.order, table)


def class_invariant(w: Cocycle3, g: GroupElement | int = 1) -> PhaseExponent:
    """prod_{k=0}^{d-1} w(g, g^k, g) for a generator g of a cyclic group.

    Unchanged by multiplying w with any coboundary, and equal to
    exp(2 pi i c / d) on the standard family, so it separates the classes.
    """
    G = w.group
    if not G.spec.is_cyclic:
        raise CohomologyError(f"class_invariant needs a cyclic group, got {G.spec}")
    gi = G.index(g)
    if not is_generator(G[gi]):
        raise CohomologyError(f"{G[gi]} does not generate {G.spec}")
    total = 0
    power = 0  # index of g^k
    for _ in range(G.order):
        total += int(w.table[gi, power, gi])
        power = int(G.mul_table[power, gi])
    return PhaseExponent(total, w.order).reduced()
