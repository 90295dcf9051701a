"""Entanglement-concentration lines on lattices and their measurement schedules.

A line either keeps two partons of one face (O1) or joins a chain of
edge-adjacent faces by same-site Bell merges (O2). Every face carries at most
one line; the two endpoint partons of each line become one bond.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from .lattice import UNIT_CELLS, Face, Lattice, Site, builtin, cell_position
from .mbqc import MeasurementPlan, PlanError, Step


class RoutingError(RuntimeError):
    """Router failure; ``region`` lists the hubs and faces where it got stuck."""

    def __init__(self, message: str, region: dict | None = None):
        super().__init__(message)
        self.region = region or {}


@dataclass(frozen=True)
class Line:
    faces: tuple[int, ...]
    endpoints: tuple[int, int]
    merges: tuple[tuple[int, int], ...] = ()

    @property
    def kind(self) -> str:
        return "O1" if len(self.faces) == 1 else "O2"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "faces": list(self.faces),
            "endpoints": list(self.endpoints),
            "merges": [list(m) for m in self.merges],
        }

    @classmethod
    def from_json(cls, data) -> Line:
        line = cls(tuple(data["faces"]), tuple(data["endpoints"]), tuple(tuple(m) for m in data.get("merges", ())))
        if "kind" in data and data["kind"] != line.kind:
            raise PlanError(f"line kind {data['kind']} does not match its {len(line.faces)} face(s)")
        return line


@dataclass
class RoutingPlan:
    lattice: str
    lines: list[Line]
    hubs: tuple[int, ...] = ()
    target: tuple[tuple[int, int], ...] = ()

    def face_usage(self) -> dict[int, int]:
        use: dict[int, int] = {}
        for ln in self.lines:
            for f in ln.faces:
                use[f] = use.get(f, 0) + 1
        return use

    def target_graph(self, lat: Lattice) -> nx.MultiGraph:
        g = nx.MultiGraph()
        for ln in self.lines:
            a, b = (lat.parton_site[p] for p in ln.endpoints)
            g.add_edge(a, b)
        return g

    def bonds(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(ln.endpoints)) for ln in self.lines)

    def to_json(self) -> dict:
        return {
            "lattice": self.lattice,
            "hubs": list(self.hubs),
            "target": [list(e) for e in self.target],
            "lines": [ln.to_json() for ln in self.lines],
            "face_usage": {str(k): v for k, v in sorted(self.face_usage().items())},
        }

    @classmethod
    def from_json(cls, data) -> RoutingPlan:
        return cls(
            str(data.get("lattice", "")),
            [Line.from_json(x) for x in data["lines"]],
            tuple(data.get("hubs", ())),
            tuple(tuple(e) for e in data.get("target", ())),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def check_plan(plan: RoutingPlan, lat: Lattice, adjacency: dict[int, set[int]] | None = None) -> list[str]:
    """Structural check of a plan against a lattice; returns the violations."""
    out = []
    for f, n in plan.face_usage().items():
        if n > 1:
            out.append(f"face {f} carries {n} lines (at most one allowed)")
    used: dict[int, int] = {}
    for k, ln in enumerate(plan.lines):
        for f in ln.faces:
            if f not in lat.face_by_id:
                out.append(f"line {k}: unknown face {f}")
        if out and out[-1].startswith(f"line {k}: unknown"):
            continue
        members = [set(lat.face_by_id[f].cycle) for f in ln.faces]
        a, b = ln.endpoints
        if a == b:
            out.append(f"line {k}: endpoints coincide")
        if a not in members[0] or b not in members[-1]:
            out.append(f"line {k}: endpoints must lie in the first and last face")
        if len(ln.merges) != len(ln.faces) - 1:
            out.append(f"line {k}: {len(ln.faces)} faces need {len(ln.faces) - 1} merges")
            continue
        for i, (p, q) in enumerate(ln.merges):
            f, g = ln.faces[i], ln.faces[i + 1]
            if p not in members[i] or q not in members[i + 1]:
                out.append(f"line {k}: merge {i} partons not in faces {f}, {g}")
            elif lat.parton_site[p] != lat.parton_site[q]:
                out.append(f"line {k}: merge {i} partons lie on different sites")
            if adjacency is not None and g not in adjacency.get(f, ()):
                out.append(f"line {k}: faces {f} and {g} share no edge")
        touched = [a, b] + [p for m in ln.merges for p in m]
        for p in touched:
            if p in used and used[p] != k:
                out.append(f"line {k}: parton {p} already used by line {used[p]}")
            used[p] = k
        if len(set(touched)) != len(touched):
            out.append(f"line {k}: a parton is used twice within the line")
    return out


def require_plan(plan: RoutingPlan, lat: Lattice, adjacency=None) -> RoutingPlan:
    bad = check_plan(plan, lat, adjacency)
    if bad:
        raise PlanError(bad[0])
    return plan


def compile_plan(plan: RoutingPlan, lat: Lattice, d: int | None = None) -> MeasurementPlan:
    """Bell merges for every O2 line, then X~ on every parton that is not an endpoint.

    The local dimension does not change the schedule; ``d`` is accepted for
    symmetry with the executors.
    """
    require_plan(plan, lat)
    keep = {p for ln in plan.lines for p in ln.endpoints}
    merged = {p for ln in plan.lines for m in ln.merges for p in m}
    steps = [Step("bell", m) for ln in plan.lines for m in ln.merges]
    steps += [Step("x_tilde", (p,)) for p in lat.partons if p not in keep and p not in merged and p in lat.parton_face]
    return MeasurementPlan(steps, f"routing:{plan.lattice}").validate()


# ---------------------------------------------------------------------------
# builtin patterns


def _grid(lat: Lattice) -> tuple[str, int, int]:
    try:
        name, dims = lat.name.rsplit("_", 1)
        nx_, ny_ = (int(x) for x in dims.split("x"))
    except ValueError:
        raise PlanError(f"lattice {lat.name!r} is not a builtin tiling") from None
    if name not in UNIT_CELLS:
        raise PlanError(f"lattice {lat.name!r} is not a builtin tiling")
    return name, nx_, ny_


def _coords(lat: Lattice) -> dict[int, tuple[int, int, int]]:
    name, nx_, _ = _grid(lat)
    return {s.id: cell_position(UNIT_CELLS[name], s.id, nx_) for s in lat.sites}


def _o1_plan(lat: Lattice, keep_per_face: dict[int, tuple[int, int]]) -> RoutingPlan:
    lines = [Line((f,), tuple(sorted(pq))) for f, pq in sorted(keep_per_face.items())]
    hubs = tuple(sorted({lat.parton_site[p] for pq in keep_per_face.values() for p in pq}))
    plan = RoutingPlan(lat.name, lines, hubs)
    plan.target = tuple(sorted(tuple(sorted(e)) for e in plan.target_graph(lat).edges()))
    return plan


def _keep_sites(lat: Lattice, keep: set[int]) -> dict[int, tuple[int, int]]:
    out = {}
    for f in lat.faces:
        kept = [p for p in f.cycle if lat.parton_site[p] in keep]
        if len(kept) == 2:
            out[f.id] = tuple(kept)
        elif kept:
            raise PlanError(f"face {f.id} keeps {len(kept)} partons")
    return out


def square_plan(lat: Lattice, parity: int = 0) -> RoutingPlan:
    """Checkerboard: keep the sites with (x + y) of the given parity."""
    name, nx_, ny_ = _grid(lat)
    if name != "square" or nx_ % 2 or ny_ % 2:
        raise PlanError("checkerboard needs a square tiling with even sides")
    co = _coords(lat)
    keep = {s for s, (_, x, y) in co.items() if (x + y) % 2 == parity}
    return _o1_plan(lat, _keep_sites(lat, keep))


def _tri_is_up(cells, nx_, ny_) -> bool:
    s = set(cells)
    return any(((x + 1) % nx_, y) in s and (x, (y + 1) % ny_) in s for x, y in s)


def triangular_plan(lat: Lattice) -> RoutingPlan:
    """Three-colouring (x - y) mod 3: drop one colour, keep the other two on up triangles."""
    name, nx_, ny_ = _grid(lat)
    if name != "triangular" or nx_ % 3 or ny_ % 3:
        raise PlanError("the triangular pattern needs a triangular tiling with sides divisible by 3")
    co = _coords(lat)
    colour = {s: (x - y) % 3 for s, (_, x, y) in co.items()}
    keep = {}
    for f in lat.faces:
        cells = [co[lat.parton_site[p]][1:] for p in f.cycle]
        if _tri_is_up(cells, nx_, ny_):
            keep[f.id] = tuple(p for p in f.cycle if colour[lat.parton_site[p]] != 0)
    return _o1_plan(lat, keep)


def honeycomb_plan(lat: Lattice) -> RoutingPlan:
    """Keep A sites outside one three-colouring class: two per hexagon."""
    name, nx_, ny_ = _grid(lat)
    if name != "honeycomb" or nx_ % 3 or ny_ % 3:
        raise PlanError("the honeycomb pattern needs a honeycomb tiling with sides divisible by 3")
    co = _coords(lat)
    keep = {s for s, (k, x, y) in co.items() if k == 0 and (x - y) % 3 != 0}
    return _o1_plan(lat, _keep_sites(lat, keep))


def kagome_plan(lat: Lattice) -> RoutingPlan:
    """Partial-site pattern: triangles keep their A and B corners, each hexagon one
    non-adjacent A-B pair, so every A and B site keeps three partons."""
    name, _, _ = _grid(lat)
    if name != "kagome":
        raise PlanError("the kagome pattern needs a kagome tiling")
    co = _coords(lat)
    kind = {s: "ABC"[k] for s, (k, _, _) in co.items()}
    keep: dict[int, tuple[int, int]] = {}
    hexes = []
    for f in lat.faces:
        if len(f.cycle) == 3:
            keep[f.id] = tuple(p for p in f.cycle if kind[lat.parton_site[p]] != "C")
        else:
            hexes.append(f)
    options = []
    for f in hexes:
        cyc = f.cycle
        opts = []
        for i, p in enumerate(cyc):
            for j, q in enumerate(cyc):
                if kind[lat.parton_site[p]] == "A" and kind[lat.parton_site[q]] == "B":
                    if (i - j) % len(cyc) not in (1, len(cyc) - 1):
                        opts.append((p, q))
        options.append(opts)
    chosen = _exact_cover(hexes, options, lat)
    if chosen is None:
        raise PlanError("no kagome hexagon assignment keeps every A and B site at degree 3")
    for f, pq in zip(hexes, chosen):
        keep[f.id] = pq
    return _o1_plan(lat, keep)


def _exact_cover(hexes, options, lat):
    """One A and one B parton per hexagon, every A and B site used exactly once."""
    used: set[int] = set()
    pick: list = [None] * len(hexes)

    def go(i):
        if i == len(hexes):
            return True
        for p, q in options[i]:
            sp, sq = lat.parton_site[p], lat.parton_site[q]
            if sp in used or sq in used:
                continue
            used.update((sp, sq))
            pick[i] = (p, q)
            if go(i + 1):
                return True
            used.difference_update((sp, sq))
        return False

    return pick if go(0) else None


BUILTIN_PLANS = {
    "square": square_plan,
    "triangular": triangular_plan,
    "honeycomb": honeycomb_plan,
    "kagome": kagome_plan,
}

# smallest tiling each builtin pattern supports
BUILTIN_SIZES = {"square": (2, 2), "triangular": (3, 3), "honeycomb": (3, 3), "kagome": (2, 2)}


def builtin_plan(name: str, nx_: int | None = None, ny_: int | None = None) -> tuple[Lattice, RoutingPlan]:
    if name not in BUILTIN_PLANS:
        raise PlanError(f"no builtin pattern for lattice {name!r}; choose from {sorted(BUILTIN_PLANS)}")
    dx, dy = BUILTIN_SIZES[name]
    lat, _ = builtin(name, nx_ or dx, ny_ or dy)
    return lat, BUILTIN_PLANS[name](lat)


def expected_target(name: str, lat: Lattice) -> str:
    """Graph family the builtin pattern should produce."""
    return "square" if name == "square" else "honeycomb"


def twisted_tiling(family: str, a: int, b: int, t: int) -> nx.MultiGraph:
    """Square or honeycomb graph on Z^2 modulo the lattice spanned by (a, 0) and (t, b)."""

    def wrap(x, y):
        k = y // b
        x, y = x - k * t, y - k * b
        return x % a, y

    g = nx.MultiGraph()
    cells = [(x, y) for y in range(b) for x in range(a)]
    if family == "square":
        g.add_nodes_from(cells)
        for x, y in cells:
            g.add_edge((x, y), wrap(x + 1, y))
            g.add_edge((x, y), wrap(x, y + 1))
    elif family == "honeycomb":
        g.add_nodes_from([("A", c) for c in cells] + [("B", c) for c in cells])
        for x, y in cells:
            for dx, dy in ((0, 0), (-1, 1), (-1, 0)):
                g.add_edge(("A", (x, y)), ("B", wrap(x + dx, y + dy)))
    else:
        raise PlanError(f"unknown graph family {family!r}")
    return g


def matches_family(g: nx.MultiGraph, family: str) -> bool:
    """Is ``g`` isomorphic (with edge multiplicities) to a periodic, possibly
    twisted, tiling of the family with the same number of vertices?"""
    per_cell = 1 if family == "square" else 2
    n = g.number_of_nodes()
    if n % per_cell:
        return False
    cells = n // per_cell
    simple = _weighted(g)
    match = nx.algorithms.isomorphism.numerical_edge_match("mult", 1)
    for a in range(1, cells + 1):
        if cells % a:
            continue
        b = cells // a
        for t in range(a):
            ref = _weighted(twisted_tiling(family, a, b, t))
            if nx.is_isomorphic(simple, ref, edge_match=match):
                return True
    return False


def _weighted(g: nx.MultiGraph) -> nx.Graph:
    out = nx.Graph()
    out.add_nodes_from(g.nodes())
    for u, v in g.edges():
        if out.has_edge(u, v):
            out[u][v]["mult"] += 1
        else:
            out.add_edge(u, v, mult=1)
    return out


# ---------------------------------------------------------------------------
# dilution


@dataclass
class DilutedLattice:
    """A lattice with some sites removed; faces keep their remaining partons."""

    base: Lattice
    holes: frozenset[int] = field(default_factory=frozenset)

    @classmethod
    def random(cls, base: Lattice, fraction: float, seed: int) -> DilutedLattice:
        rng = np.random.default_rng(seed)
        n = int(round(fraction * len(base.sites)))
        ids = sorted(s.id for s in base.sites)
        return cls(base, frozenset(int(x) for x in rng.choice(ids, size=n, replace=False)))

    @property
    def lattice(self) -> Lattice:
        sites = tuple(s for s in self.base.sites if s.id not in self.holes)
        alive = {p for s in sites for p in s.partons}
        faces = tuple(
            Face(f.id, tuple(p for p in f.cycle if p in alive)) for f in self.base.faces if any(p in alive for p in f.cycle)
        )
        return replace(
            self.base,
            sites=sites,
            faces=faces,
            periodic=self.base.periodic,
            edges=(),
            boundary=(),
            sublattices=None,
            branching=None,
            name=self.base.name,
        )

    def connected(self) -> bool:
        g = nx.Graph(self.base.site_graph())
        g.remove_nodes_from(self.holes)
        return g.number_of_nodes() > 0 and nx.is_connected(g)


# ---------------------------------------------------------------------------
# honeycomb-minor router


def brick_wall(a: int, b: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Edges of an a x b periodic brick wall (a honeycomb); a and b even."""
    edges = []
    for j in range(b):
        for i in range(a):
            edges.append(((i, j), ((i + 1) % a, j)))
            if (i + j) % 2 == 0:
                edges.append(((i, j), (i, (j + 1) % b)))
    return edges


def route_honeycomb_minor(lat, spacing: int = 4, seed: int = 0, attempts: int = 32) -> RoutingPlan:
    """Connect brick-wall hubs by face-disjoint lines on a square tiling.

    ``spacing`` counts the sites along one hub-to-hub segment, both hubs
    included, so hubs repeat every ``spacing - 1`` steps. A hub whose ideal
    site is missing moves to the nearest surviving site. Lines are found by
    breadth-first search over edge-adjacent faces, each face usable once,
    merging through sites that are neither hubs nor already used.
    """
    diluted = lat if isinstance(lat, DilutedLattice) else DilutedLattice(lat)
    base = diluted.base
    name, nx_, ny_ = _grid(base)
    if name != "square" or not base.periodic:
        raise PlanError("the router works on periodic square tilings")
    step = spacing - 1
    if step < 2:
        raise PlanError("spacing must be at least 3 so that hubs are not adjacent")
    if nx_ % step or ny_ % step or (nx_ // step) % 2 or (ny_ // step) % 2:
        raise PlanError(f"a {nx_}x{ny_} torus does not fit a brick wall with hub period {step}")
    work = diluted.lattice
    rng = np.random.default_rng(seed)
    sites = {s.id for s in work.sites}
    co = {s: (x, y) for s, (_, x, y) in _coords(base).items()}
    at = {v: k for k, v in co.items()}
    site_g = nx.Graph(base.site_graph())
    adjacency = base.face_adjacency()
    faces = {f.id: f for f in work.faces if len(f.cycle) >= 1}

    a, b = nx_ // step, ny_ // step
    hub_of: dict[tuple[int, int], int] = {}
    taken: set[int] = set()
    for j in range(b):
        for i in range(a):
            ideal = at[(i * step, j * step)]
            hub = _nearest_free(site_g, ideal, sites, taken)
            if hub is None:
                raise RoutingError("no surviving site near a hub position", {"hub_cell": [i, j]})
            hub_of[(i, j)] = hub
            taken.add(hub)
    hubs = set(hub_of.values())
    wall = brick_wall(a, b)
    targets = [(hub_of[u], hub_of[v]) for u, v in wall]
    # vertical edges first: each needs the one face its hubs keep beside them
    vertical = [k for k, (u, v) in enumerate(wall) if u[0] == v[0]]
    horizontal = [k for k, (u, v) in enumerate(wall) if u[0] != v[0]]
    failure = None
    for _ in range(attempts):
        rng.shuffle(vertical)
        rng.shuffle(horizontal)
        try:
            lines = _route_all(work, faces, adjacency, targets, vertical + horizontal, hubs, co)
            break
        except RoutingError as err:
            failure = err
    else:
        raise failure
    plan = RoutingPlan(base.name, lines, tuple(sorted(hubs)), tuple(tuple(sorted(t)) for t in targets))
    bad = check_plan(plan, work, adjacency)
    if bad:
        raise RoutingError(bad[0])
    return plan


def _route_all(work, faces, adjacency, targets, order, hubs, co) -> list[Line]:
    face_used: set[int] = set()
    site_used: set[int] = set()
    lines: list[Line] = [None] * len(targets)  # type: ignore[list-item]
    for k in order:
        u, v = targets[k]
        line = _bfs_line(work, faces, adjacency, u, v, hubs, face_used, site_used)
        if line is None:
            raise RoutingError(
                f"no free face path between hubs {u} and {v}",
                {"hubs": [u, v], "cells": [list(co[u]), list(co[v])], "faces_in_use": len(face_used)},
            )
        lines[k] = line
        face_used.update(line.faces)
        site_used.update(work.parton_site[p] for p, _ in line.merges)
    return lines


def _nearest_free(g: nx.Graph, start: int, alive: set[int], taken: set[int]) -> int | None:
    seen = {start}
    frontier = [start]
    while frontier:
        for s in sorted(frontier):
            if s in alive and s not in taken:
                return s
        nxt = []
        for s in frontier:
            for t in sorted(g.neighbors(s)):
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return None


def _bfs_line(work: Lattice, faces, adjacency, u, v, hubs, face_used, site_used) -> Line | None:
    def parton_at(f, s):
        for p in faces[f].cycle:
            if work.parton_site[p] == s:
                return p
        return None

    starts = sorted(
        f
        for f in faces
        if f not in face_used
        and parton_at(f, u) is not None
        and not ({work.parton_site[p] for p in faces[f].cycle} & hubs) - {u, v}
    )
    # state: (face, site used to enter it); parent map for path recovery
    parent: dict[tuple[int, int | None], tuple | None] = {}
    queue = deque()
    for f in starts:
        parent[(f, None)] = None
        queue.append((f, None))
    seen_states = set(parent)
    while queue:
        f, entry = queue.popleft()
        if parton_at(f, v) is not None and (len(faces[f].cycle) >= 2):
            path = [(f, entry)]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            path.reverse()
            fs = tuple(x for x, _ in path)
            merges = []
            for (f1, _), (f2, s) in zip(path, path[1:]):
                merges.append((parton_at(f1, s), parton_at(f2, s)))
            ends = (parton_at(fs[0], u), parton_at(fs[-1], v))
            if ends[0] == ends[1]:
                continue
            return Line(fs, ends, tuple(merges))
        for g in sorted(adjacency.get(f, ())):
            if g in face_used or g not in faces:
                continue
            on_hubs = {work.parton_site[p] for p in faces[g].cycle} & hubs
            if on_hubs - {v} or (on_hubs and parton_at(g, v) is None):
                continue
            shared = {work.parton_site[p] for p in faces[f].cycle} & {work.parton_site[p] for p in faces[g].cycle}
            for s in sorted(shared):
                if s in hubs or s in site_used or s == entry:
                    continue
                if (g, s) in seen_states:
                    continue
                trail = _path_sites(parent, (f, entry))
                if any(s == e or g == x for x, e in trail):
                    continue
                seen_states.add((g, s))
                parent[(g, s)] = (f, entry)
                queue.append((g, s))
    return None


def _path_sites(parent, state):
    out = []
    while state is not None:
        out.append(state)
        state = parent[state]
    return out
