"""Finite abelian groups Z_d1 x ... x Z_dm with exact element arithmetic.

Elements are stored as coordinate tuples. Most consumers work with the
integer *index* of an element in the lexicographic enumeration instead, and
use the precomputed multiplication / inverse tables for vectorised loops.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_MAX_ORDER = 12


class GroupError(ValueError):
    """Structural problem with a group or element (mismatched spec, bad coords)."""


class CapacityError(GroupError):
    """Group order exceeds the configured enumeration bound."""


@dataclass(frozen=True)
class GroupSpec:
    factors: tuple[int, ...]

    def __post_init__(self):
        factors = tuple(int(f) for f in self.factors)
        if not factors:
            raise GroupError("a group needs at least one cyclic factor")
        if any(f < 2 for f in factors):
            raise GroupError(f"cyclic orders must be >= 2, got {factors}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def cyclic(cls, d: int) -> GroupSpec:
        return cls((d,))

    @classmethod
    def parse(cls, text: str) -> GroupSpec:
        """Parse ``Z3`` or ``Z2xZ2`` (case-insensitive)."""
        parts = text.strip().lower().split("x")
        factors = []
        for part in parts:
            m = re.fullmatch(r"z(\d+)", part.strip())
            if m is None:
                raise GroupError(f"cannot parse group {text!r}; expected e.g. Z3 or Z2xZ2")
            factors.append(int(m.group(1)))
        return cls(tuple(factors))

    @property
    def order(self) -> int:
        return math.prod(self.factors)

    @property
    def is_cyclic(self) -> bool:
        return len(self.factors) == 1

    @property
    def name(self) -> str:
        return "x".join(f"Z{f}" for f in self.factors)

    def __str__(self) -> str:
        return self.name

    def identity(self) -> GroupElement:
        return GroupElement(self, (0,) * len(self.factors))

    def element(self, *coords: int) -> GroupElement:
        return GroupElement(self, tuple(coords))


@dataclass(frozen=True)
class GroupElement:
    spec: GroupSpec
    coords: tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        if len(coords) != len(self.spec.factors):
            raise GroupError(f"element {coords} has wrong arity for {self.spec}")
        coords = tuple(c % d for c, d in zip(coords, self.spec.factors))
        object.__setattr__(self, "coords", coords)

    def __mul__(self, other: GroupElement) -> GroupElement:
        return mul(self, other)

    def __repr__(self) -> str:
        if len(self.coords) == 1:
            return f"{self.spec.name}({self.coords[0]})"
        return f"{self.spec.name}{self.coords}"

    @property
    def index(self) -> int:
        """Position of the element in ``enumerate_group`` order (mixed radix)."""
        idx = 0
        for c, d in zip(self.coords, self.spec.factors):
            idx = idx * d + c
        return idx


def mul(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.spec != b.spec:
        raise GroupError(f"cannot multiply elements of {a.spec} and {b.spec}")
    return GroupElement(a.spec, tuple(x + y for x, y in zip(a.coords, b.coords)))


def inv(a: GroupElement) -> GroupElement:
    return GroupElement(a.spec, tuple(-x for x in a.coords))


def enumerate_group(spec: GroupSpec, max_order: int = DEFAULT_MAX_ORDER) -> list[GroupElement]:
    """All elements in lexicographic coordinate order."""
    if spec.order > max_order:
        raise CapacityError(f"group {spec} has order {spec.order} > bound {max_order}")
    ranges = [range(d) for d in spec.factors]
    return [GroupElement(spec, coords) for coords in itertools.product(*ranges)]


def element_order(a: GroupElement) -> int:
    return math.lcm(*(d // math.gcd(c, d) for c, d in zip(a.coords, a.spec.factors)))


def is_generator(a: GroupElement) -> bool:
    return a.spec.is_cyclic and element_order(a) == a.spec.order


@dataclass(frozen=True)
class FiniteGroup:
    """A GroupSpec together with its index-level Cayley tables."""

    spec: GroupSpec
    max_order: int = DEFAULT_MAX_ORDER
    elements: list[GroupElement] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "elements", enumerate_group(self.spec, self.max_order))

    @classmethod
    def parse(cls, text: str, max_order: int = DEFAULT_MAX_ORDER) -> FiniteGroup:
        return cls(GroupSpec.parse(text), max_order)

    @property
    def order(self) -> int:
        return self.spec.order

    @cached_property
    def mul_table(self) -> np.ndarray:
        n = self.order
        table = np.empty((n, n), dtype=np.int64)
        for a in self.elements:
            for b in self.elements:
                table[a.index, b.index] = mul(a, b).index
        return table

    @cached_property
    def inv_table(self) -> np.ndarray:
        return np.array([inv(a).index for a in self.elements], dtype=np.int64)

    def __getitem__(self, index: int) -> GroupElement:
        return self.elements[index]

    def index(self, g: GroupElement | int) -> int:
        if isinstance(g, GroupElement):
            if g.spec != self.spec:
                raise GroupError(f"element {g} is not in {self.spec}")
            return g.index
        g = int(g)
        if not 0 <= g < self.order:
            raise GroupError(f"element index {g} out of range for {self.spec}")
        return g
