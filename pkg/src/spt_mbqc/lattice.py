"""Lattices of sites, partons and plaquette faces.

Conventions
-----------
* Each site lists its partons counterclockwise. Parton ``i`` (0-based) and
  parton ``i+1`` of a site form *corner pair* ``i``; the lattice edge leaving
  the site between those two corners is identified with that pair.
* Face cycles are listed counterclockwise (interior on the left). Faces named
  in ``boundary`` are partial plaquettes of an open lattice and are stored as
  open chains in the same orientation.
* Branching index sets ``ia`` / ``ib`` are 1-based corner-pair labels: pair
  ``i`` couples parton ``i`` to parton ``i+1`` (cyclically).

Under these conventions pair ``i`` at site ``v`` (faces ``f_i``, ``f_{i+1}``)
meets pair ``j`` at the neighbouring site ``w`` where the predecessor of
``p_i`` in ``f_i`` is ``q_{j+1}`` and the successor of ``p_{i+1}`` in
``f_{i+1}`` is ``q_j``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path


class LatticeError(ValueError):
    """Invalid lattice data; ``invariant`` names the violated rule."""

    def __init__(self, message: str, invariant: str | None = None):
        super().__init__(message)
        self.invariant = invariant or message


class LatticeParseError(LatticeError):
    pass


class BranchingError(LatticeError):
    pass


@dataclass(frozen=True)
class Site:
    id: int
    partons: tuple[int, ...]


@dataclass(frozen=True)
class Face:
    id: int
    cycle: tuple[int, ...]


@dataclass(frozen=True)
class Edge:
    """A lattice edge, named by the first parton of the corner pair at each end.

    ``oriented == "a->b"`` means the pair starting at ``a`` carries the
    counterclockwise (``ia``) factor and the pair starting at ``b`` the
    clockwise (``ib``) one; phases across the edge then cancel.
    """

    a: int
    b: int
    oriented: str | None = None

    def flipped(self) -> Edge:
        flip = {"a->b": "b->a", "b->a": "a->b", None: None}
        return replace(self, oriented=flip[self.oriented])


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.passed

    def add(self, invariant: str, detail: str) -> None:
        self.violations.append((invariant, detail))

    @property
    def invariants(self) -> list[str]:
        return [v[0] for v in self.violations]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "violations": [{"invariant": i, "detail": d} for i, d in self.violations],
        }


# ---------------------------------------------------------------------------
# branching


@dataclass(frozen=True)
class BranchingAssignment:
    """Sublattice label per site plus 1-based ``(ia, ib)`` sets per label."""

    sublattice: dict[int, str]
    sets: dict[str, tuple[frozenset[int], frozenset[int]]]

    @classmethod
    def uniform(cls, lattice: Lattice, ia, ib, label: str = "A") -> BranchingAssignment:
        return cls({s.id: label for s in lattice.sites}, {label: (frozenset(ia), frozenset(ib))})

    def index_sets(self, site_id: int) -> tuple[frozenset[int], frozenset[int]]:
        try:
            return self.sets[self.sublattice[site_id]]
        except KeyError:
            raise BranchingError(f"no branching data for site {site_id}", "missing sublattice data") from None

    def pair_type(self, site_id: int, pair: int) -> str:
        """'a' or 'b' for 0-based corner pair ``pair`` of ``site_id``."""
        ia, ib = self.index_sets(site_id)
        if pair + 1 in ia:
            return "a"
        if pair + 1 in ib:
            return "b"
        raise BranchingError(f"pair {pair + 1} of site {site_id} is in neither ia nor ib")

    def with_site_sets(self, site_id: int, ia, ib) -> BranchingAssignment:
        """Copy in which one site gets its own private index sets."""
        label = f"{self.sublattice[site_id]}@{site_id}"
        sub = dict(self.sublattice)
        sub[site_id] = label
        sets = dict(self.sets)
        sets[label] = (frozenset(ia), frozenset(ib))
        return BranchingAssignment(sub, sets)

    def toggled(self, site_id: int, pair: int) -> BranchingAssignment:
        """Move 0-based ``pair`` of one site between ia and ib."""
        ia, ib = (set(s) for s in self.index_sets(site_id))
        label = pair + 1
        if label in ia:
            ia.remove(label)
            ib.add(label)
        else:
            ib.remove(label)
            ia.add(label)
        return self.with_site_sets(site_id, ia, ib)

    def labels(self) -> list[str]:
        return sorted(set(self.sublattice.values()))

    def to_json(self) -> dict:
        return {
            "sublattices": {str(k): v for k, v in sorted(self.sublattice.items())},
            "branching": {
                k: {"ia": sorted(ia), "ib": sorted(ib)} for k, (ia, ib) in sorted(self.sets.items())
            },
        }


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True, eq=False)
class Lattice:
    sites: tuple[Site, ...]
    faces: tuple[Face, ...]
    periodic: bool
    edges: tuple[Edge, ...] = ()
    boundary: tuple[int, ...] = ()
    qudit_dim: int | None = None
    sublattices: dict[int, str] | None = None
    branching: dict[str, tuple[frozenset[int], frozenset[int]]] | None = None
    name: str = ""

    # -- lookups ---------------------------------------------------------
    @cached_property
    def site_by_id(self) -> dict[int, Site]:
        return {s.id: s for s in self.sites}

    @cached_property
    def face_by_id(self) -> dict[int, Face]:
        return {f.id: f for f in self.faces}

    @cached_property
    def parton_site(self) -> dict[int, int]:
        return {p: s.id for s in self.sites for p in s.partons}

    @cached_property
    def parton_index(self) -> dict[int, int]:
        return {p: i for s in self.sites for i, p in enumerate(s.partons)}

    @cached_property
    def parton_face(self) -> dict[int, int]:
        return {p: f.id for f in self.faces for p in f.cycle}

    @cached_property
    def face_position(self) -> dict[int, int]:
        return {p: i for f in self.faces for i, p in enumerate(f.cycle)}

    @property
    def partons(self) -> list[int]:
        return sorted(self.parton_site)

    @property
    def boundary_set(self) -> frozenset[int]:
        return frozenset(self.boundary)

    def free_partons(self) -> list[int]:
        return [p for p in self.partons if p not in self.parton_face]

    def branching_assignment(self) -> BranchingAssignment | None:
        if self.sublattices is None or self.branching is None:
            return None
        return BranchingAssignment(dict(self.sublattices), dict(self.branching))

    def with_branching(self, br: BranchingAssignment | None) -> Lattice:
        if br is None:
            return replace(self, sublattices=None, branching=None)
        return replace(self, sublattices=dict(br.sublattice), branching=dict(br.sets))

    # -- combinatorial map -------------------------------------------------
    def _face_pred(self, p: int) -> int | None:
        f = self.face_by_id[self.parton_face[p]]
        i = self.face_position[p]
        if f.id in self.boundary_set:
            return f.cycle[i - 1] if i > 0 else None
        return f.cycle[i - 1]

    def _face_succ(self, p: int) -> int | None:
        f = self.face_by_id[self.parton_face[p]]
        i = self.face_position[p]
        if f.id in self.boundary_set:
            return f.cycle[i + 1] if i + 1 < len(f.cycle) else None
        return f.cycle[(i + 1) % len(f.cycle)]

    def corner_pair(self, site_id: int, pair: int) -> tuple[int, int]:
        ps = self.site_by_id[site_id].partons
        return ps[pair], ps[(pair + 1) % len(ps)]

    def pair_partner(self, site_id: int, pair: int):
        """Match a corner pair with the pair at the far end of its edge.

        Returns ``(w, j)``, the string ``"dangling"`` for an edge that leaves
        an open lattice, ``"free"`` when a face-free parton is involved, or
        raises :class:`LatticeError` when the two faces do not share an edge.
        """
        p, p2 = self.corner_pair(site_id, pair)
        if p not in self.parton_face or p2 not in self.parton_face:
            return "free"
        prev = self._face_pred(p)
        nxt = self._face_succ(p2)
        if prev is None and nxt is None:
            return "dangling"
        if prev is None or nxt is None:
            raise LatticeError(
                f"faces {self.parton_face[p]} and {self.parton_face[p2]} at site {site_id} "
                "share no edge",
                "faces share no edge",
            )
        w = self.parton_site[prev]
        ws = self.site_by_id[w].partons
        ip = self.parton_index[prev]
        if self.parton_site[nxt] != w or ws[(ip - 1) % len(ws)] != nxt:
            raise LatticeError(
                f"faces {self.parton_face[p]} and {self.parton_face[p2]} at site {site_id} "
                "share no edge",
                "faces share no edge",
            )
        return w, self.parton_index[nxt]

    @cached_property
    def edge_pairs(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """All lattice edges as matched corner pairs ``((v, i), (w, j))``."""
        seen = set()
        out = []
        for s in self.sites:
            for i in range(len(s.partons)):
                if (s.id, i) in seen:
                    continue
                partner = self.pair_partner(s.id, i)
                if isinstance(partner, str):
                    continue
                seen.add((s.id, i))
                seen.add(partner)
                out.append(((s.id, i), partner))
        return out

    @cached_property
    def dangling_pairs(self) -> list[tuple[int, int]]:
        out = []
        for s in self.sites:
            for i in range(len(s.partons)):
                if self.pair_partner(s.id, i) == "dangling":
                    out.append((s.id, i))
        return out

    def edge_records(self, br: BranchingAssignment | None = None) -> list[Edge]:
        out = []
        for (v, i), (w, j) in self.edge_pairs:
            a = self.site_by_id[v].partons[i]
            b = self.site_by_id[w].partons[j]
            out.append(Edge(a, b, edge_orientation(br, (v, i), (w, j)) if br else None))
        return out

    def face_adjacency(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {f.id: set() for f in self.faces}
        for (v, i), _ in self.edge_pairs:
            p, p2 = self.corner_pair(v, i)
            f1, f2 = self.parton_face[p], self.parton_face[p2]
            if f1 != f2:
                adj[f1].add(f2)
                adj[f2].add(f1)
        return adj

    def site_graph(self):
        """Site-level multigraph (networkx) with one edge per lattice edge."""
        import networkx as nx

        g = nx.MultiGraph()
        g.add_nodes_from(s.id for s in self.sites)
        for (v, i), (w, j) in self.edge_pairs:
            g.add_edge(v, w, pairs=((v, i), (w, j)))
        return g

    def euler_characteristic(self) -> int:
        return len(self.sites) - len(self.edge_pairs) + len(self.faces)

    def face_sites(self, face_id: int) -> list[int]:
        return [self.parton_site[p] for p in self.face_by_id[face_id].cycle]

    def parton_in_face_at(self, face_id: int, site_id: int) -> list[int]:
        return [p for p in self.face_by_id[face_id].cycle if self.parton_site[p] == site_id]

    def summary(self) -> dict:
        return {
            "name": self.name,
            "sites": len(self.sites),
            "partons": len(self.parton_site),
            "faces": len(self.faces),
            "edges": len(self.edge_pairs),
            "periodic": self.periodic,
        }


def edge_orientation(br: BranchingAssignment, end_a, end_b) -> str:
    ta = br.pair_type(*end_a)
    tb = br.pair_type(*end_b)
    if ta == "a" and tb == "b":
        return "a->b"
    if ta == "b" and tb == "a":
        return "b->a"
    return "antiparallel"


# ---------------------------------------------------------------------------
# validation


def validate(lat: Lattice) -> ValidationReport:
    rep = ValidationReport()
    owner: dict[int, int] = {}
    for s in lat.sites:
        if not s.partons:
            rep.add("dangling site", f"site {s.id} has no partons")
        for p in s.partons:
            if p < 0:
                rep.add("parton ids are non-negative", f"parton {p}")
            if p in owner:
                rep.add("parton in multiple sites", f"parton {p} in sites {owner[p]} and {s.id}")
            owner[p] = s.id
    if len({s.id for s in lat.sites}) != len(lat.sites):
        rep.add("duplicate site id", "site ids are not unique")
    if len({f.id for f in lat.faces}) != len(lat.faces):
        rep.add("duplicate face id", "face ids are not unique")

    in_face: dict[int, int] = {}
    for f in lat.faces:
        if len(set(f.cycle)) != len(f.cycle):
            rep.add("face visits a parton twice", f"face {f.id}")
        if f.id not in lat.boundary_set and len(f.cycle) < 3:
            rep.add("face too short", f"face {f.id} has {len(f.cycle)} partons")
        if f.id in lat.boundary_set and not f.cycle:
            rep.add("face too short", f"boundary face {f.id} is empty")
        for p in f.cycle:
            if p not in owner:
                rep.add("face references unknown parton", f"face {f.id}, parton {p}")
            elif p in in_face and in_face[p] != f.id:
                rep.add("parton in multiple faces", f"parton {p} in faces {in_face[p]} and {f.id}")
            in_face[p] = f.id
    unknown_boundary = set(lat.boundary) - {f.id for f in lat.faces}
    if unknown_boundary:
        rep.add("boundary references unknown face", str(sorted(unknown_boundary)))
    if not rep.passed:
        return rep

    for s in lat.sites:
        if all(p not in in_face for p in s.partons):
            rep.add("dangling site", f"site {s.id} has no parton in any face")

    partners = {}
    for s in lat.sites:
        for i in range(len(s.partons)):
            try:
                partners[(s.id, i)] = lat.pair_partner(s.id, i)
            except LatticeError as exc:
                rep.add(exc.invariant, str(exc))
    for key, val in partners.items():
        if isinstance(val, tuple) and partners.get(val) != key:
            rep.add("faces share no edge", f"corner pair {key} matched to {val} but not back")
    if not rep.passed:
        return rep

    if lat.periodic:
        if lat.boundary:
            rep.add("periodic lattice has boundary faces", str(list(lat.boundary)))
        if lat.free_partons():
            rep.add("periodic lattice has face-free partons", str(lat.free_partons()[:8]))
        if any(v == "dangling" for v in partners.values()):
            rep.add("periodic lattice has dangling edges", "")
        chi = lat.euler_characteristic()
        if chi != 0:
            rep.add("torus euler characteristic", f"V - E + F = {chi}, expected 0")

    if lat.edges:
        derived = {}
        for (v, i), (w, j) in lat.edge_pairs:
            a = lat.site_by_id[v].partons[i]
            b = lat.site_by_id[w].partons[j]
            derived[frozenset((a, b))] = (a, b)
        for e in lat.edges:
            if frozenset((e.a, e.b)) not in derived:
                rep.add("edge record does not match an edge", f"edge {e.a}-{e.b}")
            if e.oriented not in (None, "a->b", "b->a"):
                rep.add("bad edge orientation", f"edge {e.a}-{e.b}: {e.oriented!r}")

    br = lat.branching_assignment()
    if br is not None:
        for inv, detail in check_branching(lat, br).violations:
            rep.add(inv, detail)
    return rep


def check_branching(lat: Lattice, br: BranchingAssignment) -> ValidationReport:
    """Partition property of index sets and parallel orientation on every edge."""
    rep = ValidationReport()
    size: dict[str, int] = {}
    for s in lat.sites:
        label = br.sublattice.get(s.id)
        if label is None or label not in br.sets:
            rep.add("missing sublattice data", f"site {s.id}")
            continue
        k = len(s.partons)
        if size.setdefault(label, k) != k:
            rep.add("sublattice sites differ in parton count", f"label {label}")
        ia, ib = br.sets[label]
        if ia & ib or (ia | ib) != set(range(1, k + 1)):
            rep.add("ia/ib must partition 1..k*", f"label {label}: ia={sorted(ia)} ib={sorted(ib)}")
    if not rep.passed:
        return rep
    given = {}
    for e in lat.edges:
        if e.oriented:
            given[frozenset((e.a, e.b))] = e
    for end_a, end_b in lat.edge_pairs:
        o = edge_orientation(br, end_a, end_b)
        a = lat.site_by_id[end_a[0]].partons[end_a[1]]
        b = lat.site_by_id[end_b[0]].partons[end_b[1]]
        if o == "antiparallel":
            rep.add("edge orientation not parallel", f"edge {a}-{b} (sites {end_a[0]}, {end_b[0]})")
            continue
        e = given.get(frozenset((a, b)))
        if e is not None:
            want = o if e.a == a else {"a->b": "b->a", "b->a": "a->b"}[o]
            if e.oriented != want:
                rep.add("edge orientation disagrees with branching", f"edge {e.a}-{e.b}")
    return rep


def require_valid(lat: Lattice) -> Lattice:
    rep = validate(lat)
    if not rep.passed:
        inv, detail = rep.violations[0]
        raise LatticeError(f"{inv}: {detail}", inv)
    return lat


# ---------------------------------------------------------------------------
# branching derivation


def derive_branching(lat: Lattice, sublattices: dict[int, str] | None = None) -> BranchingAssignment:
    """Find index sets so that every edge carries exactly one ccw factor.

    Each (label, pair) is a boolean variable; each edge demands that its two
    ends differ, and edges with a stored orientation pin both ends. Sites
    default to private labels. Constraints are propagated breadth-first from
    the lowest unassigned variable, which gets 'a'. A contradiction raises
    :class:`BranchingError` naming the edge.
    """
    if sublattices is None:
        sublattices = lat.sublattices or {s.id: f"s{s.id}" for s in lat.sites}
    label_of = dict(sublattices)
    size: dict[str, int] = {}
    for s in lat.sites:
        if s.id not in label_of:
            raise BranchingError(f"site {s.id} has no sublattice", "missing sublattice data")
        k = size.setdefault(label_of[s.id], len(s.partons))
        if k != len(s.partons):
            raise BranchingError(f"sublattice {label_of[s.id]} mixes parton counts")

    def var(end):
        return (label_of[end[0]], end[1])

    adj: dict[tuple, list[tuple]] = {}
    for a, b in lat.edge_pairs:
        va, vb = var(a), var(b)
        if va == vb:
            raise BranchingError(
                f"edge between corner pairs {a} and {b} ties a variable to its own negation",
                "no consistent branching",
            )
        adj.setdefault(va, []).append(vb)
        adj.setdefault(vb, []).append(va)

    value: dict[tuple, str] = {}
    pinned = []
    by_parton = {}
    for (v, i), (w, j) in lat.edge_pairs:
        by_parton[frozenset((lat.site_by_id[v].partons[i], lat.site_by_id[w].partons[j]))] = ((v, i), (w, j))
    for e in lat.edges:
        if not e.oriented:
            continue
        ends = by_parton.get(frozenset((e.a, e.b)))
        if ends is None:
            raise BranchingError(f"edge record {e.a}-{e.b} does not match the lattice")
        end_a = ends[0] if lat.site_by_id[ends[0][0]].partons[ends[0][1]] == e.a else ends[1]
        end_b = ends[1] if end_a is ends[0] else ends[0]
        head, tail = (end_a, end_b) if e.oriented == "a->b" else (end_b, end_a)
        pinned.append((var(head), "a"))
        pinned.append((var(tail), "b"))

    def assign(start, val):
        queue = deque([(start, val)])
        while queue:
            node, v = queue.popleft()
            if node in value:
                if value[node] != v:
                    raise BranchingError(
                        f"branching propagation contradicts at {node}", "no consistent branching"
                    )
                continue
            value[node] = v
            other = "b" if v == "a" else "a"
            for nb in adj.get(node, ()):
                queue.append((nb, other))

    for node, v in pinned:
        assign(node, v)
    all_vars = sorted({(label_of[s.id], i) for s in lat.sites for i in range(len(s.partons))})
    for node in all_vars:
        if node not in value:
            assign(node, "a")

    sets = {}
    for label, k in size.items():
        ia = frozenset(i + 1 for i in range(k) if value[(label, i)] == "a")
        ib = frozenset(i + 1 for i in range(k) if value[(label, i)] == "b")
        sets[label] = (ia, ib)
    return BranchingAssignment(label_of, sets)


# ---------------------------------------------------------------------------
# unit cells and tiling


@dataclass(frozen=True)
class CellSite:
    label: str
    pos: tuple[float, float]
    start: int = 0  # corner index that becomes parton 1


@dataclass(frozen=True)
class CellBond:
    a: int
    b: int
    offset: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class UnitCell:
    name: str
    vectors: tuple[tuple[float, float], tuple[float, float]]
    sites: tuple[CellSite, ...]
    bonds: tuple[CellBond, ...]
    branching: dict[str, tuple[tuple[int, ...], tuple[int, ...]]] | None = None

    @cached_property
    def neighbours(self) -> list[list[tuple[int, tuple[int, int], float]]]:
        """Per cell site: (site, offset, angle) sorted counterclockwise."""
        nbrs: list[list] = [[] for _ in self.sites]
        (ax, ay), (bx, by) = self.vectors

        def add(a, b, off):
            pa, pb = self.sites[a].pos, self.sites[b].pos
            dx = pb[0] + off[0] * ax + off[1] * bx - pa[0]
            dy = pb[1] + off[0] * ay + off[1] * by - pa[1]
            nbrs[a].append((b, off, math.atan2(dy, dx) % (2 * math.pi)))

        for bond in self.bonds:
            add(bond.a, bond.b, bond.offset)
            add(bond.b, bond.a, (-bond.offset[0], -bond.offset[1]))
        for s, lst in enumerate(nbrs):
            lst.sort(key=lambda t: t[2])
            angles = [round(t[2], 9) for t in lst]
            if len(set(angles)) != len(angles):
                raise LatticeError(
                    f"cell site {s} of {self.name} has two bonds in the same direction",
                    "boundary identification mismatch",
                )
            if len(lst) < 2:
                raise LatticeError(f"cell site {s} of {self.name} has degree < 2", "dangling site")
        return nbrs

    @cached_property
    def reverse_index(self) -> list[list[int]]:
        rev = []
        for s, lst in enumerate(self.neighbours):
            row = []
            for t, off, _ in lst:
                back = (-off[0], -off[1])
                matches = [k for k, (u, o, _) in enumerate(self.neighbours[t]) if u == s and o == back]
                if len(matches) != 1:
                    raise LatticeError(
                        f"bond {s}->{t} {off} has no unique reverse", "boundary identification mismatch"
                    )
                row.append(matches[0])
            rev.append(row)
        return rev


def tile_unit_cell(cell: UnitCell, nx: int, ny: int) -> tuple[Lattice, BranchingAssignment | None]:
    """Periodic nx x ny tiling of a unit cell, faces traced from the embedding."""
    if nx < 1 or ny < 1:
        raise LatticeError("tiling sizes must be >= 1")
    nbrs = cell.neighbours
    rev = cell.reverse_index
    ns = len(cell.sites)

    def sid(s, cx, cy):
        return (cy * nx + cx) * ns + s

    sites = []
    parton_of = {}  # (site id, corner) -> parton id
    pid = 0
    for cy in range(ny):
        for cx in range(nx):
            for s, cs in enumerate(cell.sites):
                deg = len(nbrs[s])
                partons = []
                for i in range(deg):
                    corner = (cs.start + i) % deg
                    parton_of[(sid(s, cx, cy), corner)] = pid
                    partons.append(pid)
                    pid += 1
                sites.append(Site(sid(s, cx, cy), tuple(partons)))

    faces = []
    used = set()
    for cy in range(ny):
        for cx in range(nx):
            for s in range(ns):
                for k in range(len(nbrs[s])):
                    h = (s, cx, cy, k)
                    if h in used:
                        continue
                    cycle = []
                    while h not in used:
                        used.add(h)
                        s0, x0, y0, k0 = h
                        t, off, _ = nbrs[s0][k0]
                        tx, ty = (x0 + off[0]) % nx, (y0 + off[1]) % ny
                        corner = (rev[s0][k0] - 1) % len(nbrs[t])
                        cycle.append(parton_of[(sid(t, tx, ty), corner)])
                        h = (t, tx, ty, corner)
                    if h != (s, cx, cy, k):
                        raise LatticeError("face tracing did not close", "boundary identification mismatch")
                    # start the cycle at its smallest parton for reproducibility
                    m = cycle.index(min(cycle))
                    faces.append(Face(len(faces), tuple(cycle[m:] + cycle[:m])))

    sublattices = {sid(s, cx, cy): cs.label for cy in range(ny) for cx in range(nx) for s, cs in enumerate(cell.sites)}
    br = None
    branching = None
    if cell.branching is not None:
        branching = {k: (frozenset(ia), frozenset(ib)) for k, (ia, ib) in cell.branching.items()}
        br = BranchingAssignment(dict(sublattices), dict(branching))
    lat = Lattice(
        sites=tuple(sites),
        faces=tuple(faces),
        periodic=True,
        sublattices=sublattices,
        branching=branching,
        name=f"{cell.name}_{nx}x{ny}",
    )
    rep = validate(replace(lat, sublattices=None, branching=None))
    if not rep.passed:
        raise LatticeError(f"tiling of {cell.name} is invalid: {rep.violations[0]}", rep.violations[0][0])
    return lat, br


def cell_position(cell: UnitCell, lat_site_id: int, nx: int) -> tuple[int, int, int]:
    """(cell site index, cx, cy) for a site id produced by ``tile_unit_cell``."""
    ns = len(cell.sites)
    s = lat_site_id % ns
    c = lat_site_id // ns
    return s, c % nx, c // nx


_R3 = math.sqrt(3.0)

UNIT_CELLS: dict[str, UnitCell] = {
    "square": UnitCell(
        "square",
        ((1.0, 0.0), (0.0, 1.0)),
        (CellSite("A", (0.0, 0.0)),),
        (CellBond(0, 0, (1, 0)), CellBond(0, 0, (0, 1))),
        {"A": ((1, 2), (3, 4))},
    ),
    "triangular": UnitCell(
        "triangular",
        ((1.0, 0.0), (0.5, _R3 / 2)),
        (CellSite("A", (0.0, 0.0)),),
        (CellBond(0, 0, (1, 0)), CellBond(0, 0, (0, 1)), CellBond(0, 0, (-1, 1))),
        {"A": ((1, 2, 3), (4, 5, 6))},
    ),
    "honeycomb": UnitCell(
        "honeycomb",
        ((1.5, _R3 / 2), (0.0, _R3)),
        (CellSite("A", (0.0, 0.0)), CellSite("B", (1.0, 0.0))),
        (CellBond(0, 1, (0, 0)), CellBond(0, 1, (-1, 1)), CellBond(0, 1, (-1, 0))),
        {"A": ((1, 2), (3,)), "B": ((1,), (2, 3))},
    ),
    "kagome": UnitCell(
        "kagome",
        ((2.0, 0.0), (1.0, _R3)),
        (
            CellSite("A", (0.0, 0.0)),
            CellSite("B", (1.0, 0.0)),
            CellSite("C", (0.5, _R3 / 2), start=1),
        ),
        (
            CellBond(0, 1, (0, 0)),
            CellBond(0, 2, (0, 0)),
            CellBond(1, 2, (0, 0)),
            CellBond(1, 0, (1, 0)),
            CellBond(1, 2, (1, -1)),
            CellBond(0, 2, (0, -1)),
        ),
        {"A": ((1, 2), (3, 4)), "B": ((2, 3), (1, 4)), "C": ((2, 3), (1, 4))},
    ),
}


def builtin(name: str, nx: int = 1, ny: int = 1) -> tuple[Lattice, BranchingAssignment]:
    try:
        cell = UNIT_CELLS[name]
    except KeyError:
        raise LatticeError(f"unknown builtin lattice {name!r}; choose from {sorted(UNIT_CELLS)}") from None
    lat, br = tile_unit_cell(cell, nx, ny)
    return lat, br


# ---------------------------------------------------------------------------
# open patches


def restrict(lat: Lattice, keep_sites, name: str | None = None) -> Lattice:
    """Open lattice on a subset of sites.

    Faces entirely inside stay closed; faces cut by the subset keep their
    surviving partons as an open chain and are recorded as boundary faces.
    """
    keep = set(keep_sites)
    sites = tuple(s for s in lat.sites if s.id in keep)
    kept_partons = {p for s in sites for p in s.partons}
    faces = []
    boundary = []
    for f in lat.faces:
        alive = [p in kept_partons for p in f.cycle]
        if not any(alive):
            continue
        if all(alive):
            faces.append(f)
            continue
        n = len(f.cycle)
        starts = [i for i in range(n) if alive[i] and not alive[i - 1]]
        if len(starts) != 1:
            raise LatticeError(
                f"face {f.id} is cut into {len(starts)} pieces by the site subset", "boundary face split"
            )
        i0 = starts[0]
        chain = []
        i = i0
        while alive[i % n] and len(chain) < n:
            chain.append(f.cycle[i % n])
            i += 1
        faces.append(Face(f.id, tuple(chain)))
        boundary.append(f.id)
    sub = None
    if lat.sublattices is not None:
        sub = {k: v for k, v in lat.sublattices.items() if k in keep}
    return Lattice(
        sites=sites,
        faces=tuple(faces),
        periodic=False,
        boundary=tuple(boundary),
        qudit_dim=lat.qudit_dim,
        sublattices=sub,
        branching=lat.branching,
        name=name or f"{lat.name}_open",
    )


def open_square_patch(nx: int, ny: int, margin: int = 1) -> tuple[Lattice, BranchingAssignment]:
    """nx x ny block of square-lattice sites with partial plaquettes around it."""
    big, _ = builtin("square", nx + 2 * margin, ny + 2 * margin)
    W = nx + 2 * margin
    keep = [y * W + x for y in range(margin, margin + ny) for x in range(margin, margin + nx)]
    lat = restrict(big, keep, name=f"square_open_{nx}x{ny}")
    return lat, lat.branching_assignment()


# ---------------------------------------------------------------------------
# file format

_TOP_FIELDS = {"qudit_dim", "sites", "faces", "edges", "periodic", "sublattices", "branching", "boundary", "name"}


def _expect(obj, keys: set[str], required: set[str], where: str):
    if not isinstance(obj, dict):
        raise LatticeParseError(f"{where}: expected an object", "parse error")
    unknown = set(obj) - keys
    if unknown:
        raise LatticeParseError(f"{where}: unknown field(s) {sorted(unknown)}", "unknown field")
    missing = required - set(obj)
    if missing:
        raise LatticeParseError(f"{where}: missing field(s) {sorted(missing)}", "missing field")


def _int(x, where):
    if isinstance(x, bool) or not isinstance(x, int):
        raise LatticeParseError(f"{where}: expected an integer, got {x!r}", "parse error")
    return x


def lattice_from_dict(data: dict) -> Lattice:
    _expect(data, _TOP_FIELDS, {"sites", "faces", "periodic"}, "lattice")
    sites = []
    for n, rec in enumerate(data["sites"]):
        _expect(rec, {"id", "partons"}, {"id", "partons"}, f"sites[{n}]")
        sites.append(Site(_int(rec["id"], f"sites[{n}].id"), tuple(_int(p, f"sites[{n}].partons") for p in rec["partons"])))
    faces = []
    for n, rec in enumerate(data["faces"]):
        _expect(rec, {"id", "cycle"}, {"id", "cycle"}, f"faces[{n}]")
        faces.append(Face(_int(rec["id"], f"faces[{n}].id"), tuple(_int(p, f"faces[{n}].cycle") for p in rec["cycle"])))
    edges = []
    for n, rec in enumerate(data.get("edges", [])):
        _expect(rec, {"a", "b", "oriented"}, {"a", "b"}, f"edges[{n}]")
        o = rec.get("oriented")
        if o not in (None, "a->b", "b->a"):
            raise LatticeParseError(f"edges[{n}].oriented: expected 'a->b', 'b->a' or null", "parse error")
        edges.append(Edge(_int(rec["a"], f"edges[{n}].a"), _int(rec["b"], f"edges[{n}].b"), o))
    if not isinstance(data["periodic"], bool):
        raise LatticeParseError("periodic: expected a boolean", "parse error")
    sub = None
    if "sublattices" in data:
        if not isinstance(data["sublattices"], dict):
            raise LatticeParseError("sublattices: expected an object", "parse error")
        try:
            sub = {int(k): str(v) for k, v in data["sublattices"].items()}
        except ValueError:
            raise LatticeParseError("sublattices: keys must be site ids", "parse error") from None
    branching = None
    if "branching" in data:
        branching = {}
        for label, rec in data["branching"].items():
            _expect(rec, {"ia", "ib"}, {"ia", "ib"}, f"branching[{label}]")
            branching[str(label)] = (
                frozenset(_int(i, f"branching[{label}].ia") for i in rec["ia"]),
                frozenset(_int(i, f"branching[{label}].ib") for i in rec["ib"]),
            )
    qd = data.get("qudit_dim")
    if qd is not None:
        qd = _int(qd, "qudit_dim")
    return Lattice(
        sites=tuple(sites),
        faces=tuple(faces),
        periodic=data["periodic"],
        edges=tuple(edges),
        boundary=tuple(_int(b, "boundary") for b in data.get("boundary", [])),
        qudit_dim=qd,
        sublattices=sub,
        branching=branching,
        name=str(data.get("name", "")),
    )


def lattice_to_dict(lat: Lattice, include_edges: bool = True) -> dict:
    out: dict = {}
    if lat.name:
        out["name"] = lat.name
    if lat.qudit_dim is not None:
        out["qudit_dim"] = lat.qudit_dim
    out["periodic"] = lat.periodic
    out["sites"] = [{"id": s.id, "partons": list(s.partons)} for s in lat.sites]
    out["faces"] = [{"id": f.id, "cycle": list(f.cycle)} for f in lat.faces]
    if lat.boundary:
        out["boundary"] = list(lat.boundary)
    br = lat.branching_assignment()
    if include_edges:
        edges = lat.edges or tuple(lat.edge_records(br))
        out["edges"] = [{"a": e.a, "b": e.b, "oriented": e.oriented} for e in edges]
    if br is not None:
        out.update(br.to_json())
    return out


def load_lattice(path) -> Lattice:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LatticeParseError(f"{path}: line {exc.lineno}: {exc.msg}", "parse error") from None
    lat = lattice_from_dict(data)
    if not lat.name:
        lat = replace(lat, name=Path(path).stem)
    return require_valid(lat)


def save_lattice(lat: Lattice, path) -> None:
    Path(path).write_text(json.dumps(lattice_to_dict(lat), indent=1) + "\n")


def resolve_lattice(spec: str) -> tuple[Lattice, BranchingAssignment | None]:
    """``builtin:NAME[:NXxNY]`` or a path to a lattice file."""
    if spec.startswith("builtin:"):
        parts = spec.split(":")
        name = parts[1]
        nx = ny = 1
        if len(parts) > 2:
            try:
                nx, ny = (int(v) for v in parts[2].lower().split("x"))
            except ValueError:
                raise LatticeParseError(f"bad tiling size in {spec!r}; expected e.g. builtin:square:2x2") from None
        return builtin(name, nx, ny)
    lat = load_lattice(spec)
    return lat, lat.branching_assignment()
