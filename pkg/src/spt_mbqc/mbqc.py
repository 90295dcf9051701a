"""Measurement patterns on plaquette states: reduction to bonds, cluster
conversion, gate teleportation and small circuits.

Every operation works on a list of :class:`Branch` objects. A measurement
policy decides how many children a branch gets: all nonzero outcomes
(exhaustive), one random outcome (sampled) or a fixed one (forced).

Frame rules used below (``(x, z)`` means ``raw = X^x Z^z ideal``):

* X~ measurement of a GHZ member with frame ``(x, z)`` and outcome ``m``:
  the effective outcome is ``m - z`` and a representative survivor of the
  cluster picks up ``Z^-(m - z)``.
* Generalized Bell merge, outcome ``(a, b)`` on ``(p, q)``: with
  ``a' = a - z_p - z_q`` and ``b' = b - x_p + x_q`` every survivor on p's side
  picks up ``X^b'`` and the merged cluster's representative ``Z^-a'``.
* Logical projection with frames ``(x_i, z_i)`` on its k partons: the new
  qudit gets ``(x_k, sum z_i)`` and outcome ``m_i`` becomes ``m_i + x_i - x_k``,
  which puts ``Z^-(m_i + x_i - x_k)`` on the far end of bond i.
* Joint teleportation bases (N, O, W) are adapted to the frames of their
  targets, so the targets' frames are absorbed into the measurement.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .groups import CapacityError
from .qstate import (
    CZ,
    Exhaustive,
    MeasurementRecord,
    PauliFrame,
    ProductState,
    Sampled,
    SparseState,
    F,
    apply,
    basis_from_vectors,
    bell_basis,
    computational_basis,
    fidelity,
    fourier_matrix,
    logical_projection,
    omega,
    overlap,
    pauli_matrix,
    product_plaquette_state,
    reduced_density,
    twisted_n_basis,
    twisted_o_basis,
    twisted_w_basis,
    x_tilde_basis,
)

MAX_BRANCHES = 1 << 16


class PlanError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# plans

STEP_KINDS = (
    "x_tilde",
    "computational",
    "bell",
    "logical_projection",
    "twisted_N",
    "twisted_O",
    "twisted_W",
)


@dataclass(frozen=True)
class Step:
    kind: str
    targets: tuple[int, ...]
    params: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise PlanError(f"unknown step kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(set(self.targets)) != len(self.targets):
            raise PlanError(f"step {self.kind} has repeated targets {self.targets}")

    def to_json(self) -> dict:
        out = {"kind": self.kind, "targets": list(self.targets)}
        if self.params:
            out["params"] = {k: v for k, v in self.params.items() if isinstance(v, (int, str, list))}
        return out


@dataclass
class MeasurementPlan:
    steps: list[Step]
    name: str = ""

    def measured(self) -> list[int]:
        return [t for s in self.steps for t in s.targets]

    def validate(self) -> MeasurementPlan:
        seen = set()
        for s in self.steps:
            dup = seen & set(s.targets)
            if dup:
                raise PlanError(f"parton(s) {sorted(dup)} measured twice")
            seen |= set(s.targets)
        return self

    def to_json(self) -> dict:
        return {"name": self.name, "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, data) -> MeasurementPlan:
        if isinstance(data, list):
            data = {"steps": data}
        unknown = set(data) - {"name", "steps"}
        if unknown:
            raise PlanError(f"unknown plan field(s) {sorted(unknown)}")
        steps = []
        for n, rec in enumerate(data.get("steps", [])):
            extra = set(rec) - {"kind", "targets", "params"}
            if extra:
                raise PlanError(f"steps[{n}]: unknown field(s) {sorted(extra)}")
            steps.append(Step(rec["kind"], tuple(rec["targets"]), dict(rec.get("params", {}))))
        return cls(steps, str(data.get("name", ""))).validate()

    @classmethod
    def load(cls, path) -> MeasurementPlan:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# clusters and branches


@dataclass
class Clusters:
    """Which unmeasured partons currently share one GHZ-like cluster."""

    cluster_of: dict[int, int] = field(default_factory=dict)
    members: dict[int, set[int]] = field(default_factory=dict)

    @classmethod
    def from_groups(cls, groups) -> Clusters:
        c = cls()
        for i, grp in enumerate(groups):
            c.members[i] = set(grp)
            for p in grp:
                c.cluster_of[p] = i
        return c

    def copy(self) -> Clusters:
        return Clusters(dict(self.cluster_of), {k: set(v) for k, v in self.members.items()})

    def of(self, p: int) -> set[int]:
        cid = self.cluster_of.get(p)
        return set(self.members[cid]) if cid is not None else set()

    def remove(self, p: int) -> int | None:
        cid = self.cluster_of.pop(p, None)
        if cid is not None:
            self.members[cid].discard(p)
        return cid

    def merge(self, a: int, b: int) -> int:
        if a == b:
            return a
        for p in self.members[b]:
            self.cluster_of[p] = a
        self.members[a] |= self.members.pop(b)
        return a

    def _fresh(self) -> int:
        return max(list(self.members) + [-1]) + 1

    def add_group(self, group) -> int:
        cid = self._fresh()
        self.members[cid] = set(group)
        for p in group:
            self.cluster_of[p] = cid
        return cid

    def dissolve(self, cid: int) -> None:
        for p in sorted(self.members.pop(cid, set())):
            self.add_group([p])

    def representative(self, cid: int | None, prefer=()) -> int | None:
        if cid is None or not self.members.get(cid):
            return None
        mem = self.members[cid]
        preferred = sorted(mem & set(prefer))
        return preferred[0] if preferred else min(mem)


@dataclass
class Branch:
    state: ProductState
    frame: PauliFrame
    clusters: Clusters
    records: list[MeasurementRecord] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    prob: float = 1.0

    @property
    def d(self) -> int:
        return self.state.d

    def child(self, state: ProductState, rec: MeasurementRecord, p: float) -> Branch:
        return Branch(state, self.frame.copy(), self.clusters.copy(), self.records + [rec], list(self.log), self.prob * p)

    def outcomes(self) -> list[tuple[int, ...]]:
        return [r.outcome for r in self.records]

    def transcript(self) -> dict:
        return {"records": [r.to_json() for r in self.records], "frame_updates": self.log, "probability": self.prob}


def _frame_note(b: Branch, op: str, **info) -> None:
    b.log.append({"op": op, **info})


# -- primitive operations on one branch ------------------------------------------------


def op_x_tilde(br: Branch, p: int, policy, prefer=()) -> list[Branch]:
    out = []
    for rec, st, pr in br.state.measure((p,), x_tilde_basis(br.d), policy):
        b = br.child(st, rec, pr)
        _, z = b.frame.pop(p)
        m_eff = (rec.outcome[0] - z) % b.d
        cid = b.clusters.remove(p)
        rep = b.clusters.representative(cid, prefer)
        if rep is not None and m_eff:
            b.frame.add(rep, z=-m_eff)
        _frame_note(b, "x_tilde", parton=p, outcome=rec.outcome[0], effective=m_eff, target=rep, z=-m_eff % b.d)
        out.append(b)
    return out


def op_bell(br: Branch, p: int, q: int, policy, prefer=()) -> list[Branch]:
    side_p = br.clusters.of(p) - {p}
    side_q = br.clusters.of(q) - {q}
    if br.clusters.cluster_of.get(p) == br.clusters.cluster_of.get(q):
        raise PlanError(f"partons {p} and {q} already belong to one cluster")
    if not side_p or not side_q:
        raise PlanError(f"merge on ({p}, {q}) needs surviving partons on both sides")
    out = []
    for rec, st, pr in br.state.measure((p, q), bell_basis(br.d), policy):
        b = br.child(st, rec, pr)
        a, bb = rec.outcome
        xp, zp = b.frame.pop(p)
        xq, zq = b.frame.pop(q)
        a_eff = (a - zp - zq) % b.d
        b_eff = (bb - xp + xq) % b.d
        cp = b.clusters.remove(p)
        cq = b.clusters.remove(q)
        for s in side_p:
            b.frame.add(s, x=b_eff)
        cid = b.clusters.merge(cp, cq)
        rep = b.clusters.representative(cid, prefer)
        if a_eff:
            b.frame.add(rep, z=-a_eff)
        _frame_note(b, "bell", partons=[p, q], outcome=[a, bb], x_on=sorted(side_p), x=b_eff, target=rep, z=-a_eff % b.d)
        out.append(b)
    return out


def op_computational(br: Branch, p: int, policy) -> list[Branch]:
    out = []
    for rec, st, pr in br.state.measure((p,), computational_basis(br.d), policy):
        b = br.child(st, rec, pr)
        x, _ = b.frame.pop(p)
        k_eff = (rec.outcome[0] - x) % b.d
        rest = b.clusters.of(p) - {p}
        cid = b.clusters.remove(p)
        for s in rest:
            b.frame.add(s, x=k_eff)
        if cid is not None:
            b.clusters.dissolve(cid)
        _frame_note(b, "computational", parton=p, outcome=rec.outcome[0], x_on=sorted(rest), x=k_eff)
        out.append(b)
    return out


def adapted_basis(label: str, base_vectors: dict, frames, d: int, k: int):
    """Rotate basis vectors by the targets' Pauli frames: measures the ideal state."""
    P = np.eye(1, dtype=complex)
    for x, z in frames:
        P = np.kron(P, pauli_matrix(d, x, z))
    return basis_from_vectors(label, d, k, {o: P @ v for o, v in base_vectors.items()})


def _basis_vectors(basis) -> dict:
    return {o: basis.kraus[i, 0].conj() for i, o in enumerate(basis.outcomes)}


def op_joint(br: Branch, targets, basis, policy) -> list[Branch]:
    """Frame-adapted rank-one measurement on ``targets``; frames are absorbed."""
    targets = tuple(targets)
    frames = [br.frame.get(t) for t in targets]
    if any(f != (0, 0) for f in frames):
        basis = adapted_basis(basis.label, _basis_vectors(basis), frames, br.d, len(targets))
    out = []
    for rec, st, pr in br.state.measure(targets, basis, policy):
        b = br.child(st, rec, pr)
        for t in targets:
            b.frame.pop(t)
            b.clusters.remove(t)
        _frame_note(b, basis.label, partons=list(targets), outcome=list(rec.outcome), absorbed=[list(f) for f in frames])
        out.append(b)
    return out


def expand(branches: list[Branch], fn, max_branches: int = MAX_BRANCHES) -> list[Branch]:
    out = []
    for b in branches:
        out.extend(fn(b))
        if len(out) > max_branches:
            raise CapacityError(f"more than {max_branches} measurement branches; use a sampled policy")
    return out


# ---------------------------------------------------------------------------
# reduction to bonds


def _face_clusters(lat) -> list[list[int]]:
    groups = [list(f.cycle) for f in lat.faces]
    groups += [[p] for p in lat.free_partons()]
    return groups


def plan_clusters(lat, plan: MeasurementPlan) -> list[tuple[set[int], set[int]]]:
    """(faces, survivors) for every cluster formed by the plan's merges."""
    parent = {f.id: f.id for f in lat.faces}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s in plan.steps:
        if s.kind == "bell":
            p, q = s.targets
            fp, fq = lat.parton_face.get(p), lat.parton_face.get(q)
            if fp is None or fq is None:
                raise PlanError(f"merge partons {p}, {q} must both lie in faces")
            parent[find(fp)] = find(fq)
    measured = set(plan.measured())
    out: dict[int, tuple[set[int], set[int]]] = {}
    for f in lat.faces:
        root = find(f.id)
        faces, surv = out.setdefault(root, (set(), set()))
        faces.add(f.id)
        surv |= {p for p in f.cycle if p not in measured}
    return list(out.values())


def check_reduction_plan(lat, plan: MeasurementPlan) -> list[tuple[int, int]]:
    """Validate a reduction plan and return the bonds it leaves behind."""
    plan.validate()
    known = set(lat.parton_site)
    for s in plan.steps:
        missing = set(s.targets) - known
        if missing:
            raise PlanError(f"step {s.kind} targets unknown partons {sorted(missing)}")
        if s.kind == "x_tilde" and len(s.targets) != 1:
            raise PlanError("x_tilde steps act on one parton")
        if s.kind == "computational" and len(s.targets) != 1:
            raise PlanError("computational steps act on one parton")
        if s.kind == "bell":
            p, q = s.targets
            if lat.parton_site[p] != lat.parton_site[q]:
                raise PlanError(f"merge partons {p}, {q} must lie on the same site")
            if lat.parton_face.get(p) == lat.parton_face.get(q):
                raise PlanError(f"merge partons {p}, {q} lie on the same face")
        if s.kind not in ("x_tilde", "bell", "computational"):
            raise PlanError(f"step kind {s.kind} does not belong in a reduction plan")
    bonds = []
    for faces, surv in plan_clusters(lat, plan):
        if len(surv) == 2:
            bonds.append(tuple(sorted(surv)))
        elif len(surv) != 0:
            raise PlanError(
                f"faces {sorted(faces)} keep {len(surv)} unmeasured partons; a reduction needs exactly 2 (or 0)"
            )
    return sorted(bonds)


def initial_branch(lat, d: int, frame: PauliFrame | None = None) -> Branch:
    state = product_plaquette_state(lat, d)
    return Branch(state, frame.copy() if frame else PauliFrame(d), Clusters.from_groups(_face_clusters(lat)))


def run_reduction(branches: list[Branch], plan: MeasurementPlan, policy, prefer=(), max_branches=MAX_BRANCHES):
    for s in plan.steps:
        if s.kind == "x_tilde":
            branches = expand(branches, lambda b, s=s: op_x_tilde(b, s.targets[0], policy, prefer), max_branches)
        elif s.kind == "bell":
            branches = expand(branches, lambda b, s=s: op_bell(b, *s.targets, policy, prefer), max_branches)
        elif s.kind == "computational":
            branches = expand(branches, lambda b, s=s: op_computational(b, s.targets[0], policy), max_branches)
        else:
            raise PlanError(f"cannot run step kind {s.kind} here")
    return branches


def reduce_to_bonds(state, lat, plan: MeasurementPlan, policy=None, frame=None, max_branches=MAX_BRANCHES):
    """Execute a reduction plan; returns (branches, bonds).

    ``state`` is a :class:`ProductState` (or ``None`` for the plaquette
    state of ``lat``). Each branch carries its post-measurement state, the
    Pauli frame relative to the ideal bond state and the measurement records.
    """
    policy = policy or Exhaustive()
    bonds = check_reduction_plan(lat, plan)
    if state is None:
        root = initial_branch(lat, d=_dim_from_frame(frame), frame=frame)
    else:
        if isinstance(state, SparseState):
            state = ProductState(state.d, [state])
        root = Branch(state, frame.copy() if frame else PauliFrame(state.d), Clusters.from_groups(_face_clusters(lat)))
    prefer = {p for b in bonds for p in b}
    return run_reduction([root], plan, policy, prefer, max_branches), bonds


def _dim_from_frame(frame):
    if frame is None:
        raise PlanError("pass either a state or a frame carrying the local dimension")
    return frame.d


def reduction_groups(lat, plan: MeasurementPlan):
    """Split a plan into independent groups: (faces, steps, bonds) per cluster."""
    bonds = check_reduction_plan(lat, plan)
    groups = []
    for faces, surv in plan_clusters(lat, plan):
        partons = {p for f in faces for p in lat.face_by_id[f].cycle}
        steps = [s for s in plan.steps if set(s.targets) & partons]
        gb = [b for b in bonds if set(b) <= partons]
        groups.append((sorted(faces), steps, gb))
    return sorted(groups)


def reduce_exhaustive_by_group(lat, d: int, plan: MeasurementPlan, max_branches=MAX_BRANCHES):
    """Exhaustive outcomes for each independent group of the plan.

    Groups never share partons, so the joint branches are the Cartesian
    product of the per-group branches; checking each group on all of its
    branches covers every joint branch.
    """
    out = []
    for faces, steps, bonds in reduction_groups(lat, plan):
        comps = [SparseState.ghz(d, lat.face_by_id[f].cycle) for f in faces]
        root = Branch(
            ProductState(d, comps),
            PauliFrame(d),
            Clusters.from_groups([list(lat.face_by_id[f].cycle) for f in faces]),
        )
        prefer = {p for b in bonds for p in b}
        branches = run_reduction([root], MeasurementPlan(steps), Exhaustive(), prefer, max_branches)
        out.append((faces, bonds, branches))
    return out


def bell_pair(d: int, p: int, q: int) -> SparseState:
    return SparseState.ghz(d, (p, q))


def bond_fidelities(br: Branch, bonds) -> list[float]:
    """Fidelity of each bond with sum_j |jj>/sqrt(d) after frame correction.

    A bond that is still entangled with anything else scores 0.
    """
    out = []
    for p, q in bonds:
        comp = br.state.component(p)
        if set(comp.partons) != {p, q}:
            rho = reduced_density(comp, (p, q))
            purity = float(np.real(np.trace(rho @ rho)))
            if abs(purity - 1) > 1e-10:
                out.append(0.0)
                continue
            comp = _pure_factor(comp, (p, q))
        fixed = br.frame.restricted((p, q)).correct(comp)
        out.append(fidelity(fixed.normalized(), bell_pair(br.d, p, q)))
    return out


def _pure_factor(s: SparseState, keep) -> SparseState:
    rho = reduced_density(s, keep)
    w, v = np.linalg.eigh(rho)
    return SparseState.from_dense(s.d, keep, v[:, -1], tol=1e-12)


def checkerboard_plan(lat, parity: int = 1) -> MeasurementPlan:
    """X~ on every parton of sites whose cell coordinates have the given parity."""
    from .lattice import UNIT_CELLS, cell_position

    name = lat.name.split("_")[0]
    if name != "square":
        raise PlanError("checkerboard pattern is defined for square lattices")
    nx = int(lat.name.split("_")[1].split("x")[0])
    steps = []
    for s in lat.sites:
        _, cx, cy = cell_position(UNIT_CELLS["square"], s.id, nx)
        if (cx + cy) % 2 == parity:
            steps.extend(Step("x_tilde", (p,)) for p in s.partons)
    return MeasurementPlan(steps, f"checkerboard:{lat.name}")


def merge_plaquettes(state: ProductState, lat, p: int, q: int, policy=None, frame=None) -> list[Branch]:
    """Generalized Bell measurement joining the faces of two same-site partons."""
    if lat.parton_site.get(p) != lat.parton_site.get(q):
        raise PlanError(f"partons {p}, {q} are not on one site")
    if lat.parton_face.get(p) == lat.parton_face.get(q):
        raise PlanError(f"partons {p}, {q} lie on the same face")
    root = Branch(state, frame.copy() if frame else PauliFrame(state.d), Clusters.from_groups(_face_clusters(lat)))
    return op_bell(root, p, q, policy or Exhaustive())


# ---------------------------------------------------------------------------
# cluster conversion


@dataclass(frozen=True)
class BondGraph:
    """Logical sites holding bond ends, and the bonds between them."""

    sites: dict[int, tuple[int, ...]]
    bonds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        owner = {}
        for s, ps in self.sites.items():
            for p in ps:
                if p in owner:
                    raise PlanError(f"parton {p} assigned to two logical sites")
                owner[p] = s
        seen = set()
        for a, b in self.bonds:
            if a not in owner or b not in owner:
                raise PlanError(f"bond ({a}, {b}) has an end outside every logical site")
            if a in seen or b in seen:
                raise PlanError(f"parton in two bonds: ({a}, {b})")
            if owner[a] == owner[b]:
                raise PlanError(f"bond ({a}, {b}) starts and ends on one site")
            seen |= {a, b}
        loose = set(owner) - seen
        if loose:
            raise PlanError(f"partons {sorted(loose)} carry no bond")

    @property
    def owner(self) -> dict[int, int]:
        return {p: s for s, ps in self.sites.items() for p in ps}

    def partner(self, p: int) -> int:
        for a, b in self.bonds:
            if a == p:
                return b
            if b == p:
                return a
        raise PlanError(f"parton {p} is not a bond end")

    def logical_edges(self) -> list[tuple[int, int]]:
        own = self.owner
        return [(own[a], own[b]) for a, b in self.bonds]

    @classmethod
    def from_bonds(cls, lat, bonds) -> BondGraph:
        sites: dict[int, list[int]] = {}
        for a, b in bonds:
            sites.setdefault(lat.parton_site[a], []).append(a)
            sites.setdefault(lat.parton_site[b], []).append(b)
        return cls({s: tuple(sorted(ps)) for s, ps in sorted(sites.items())}, tuple(tuple(b) for b in bonds))

    def ideal_state(self, d: int) -> ProductState:
        return ProductState(d, [bell_pair(d, a, b) for a, b in self.bonds])


@dataclass
class LogicalRegister:
    qudit_of: dict[int, int]
    edges: list[tuple[int, int]]
    branch: Branch

    @property
    def frame(self) -> PauliFrame:
        return self.branch.frame

    @property
    def d(self) -> int:
        return self.branch.d

    def qudits(self) -> list[int]:
        return [self.qudit_of[s] for s in sorted(self.qudit_of)]

    def raw_state(self) -> SparseState:
        return self.branch.state.restricted(self.qudits())

    def corrected_state(self) -> SparseState:
        return self.frame.restricted(self.qudits()).correct(self.raw_state())

    def qudit_edges(self) -> list[tuple[int, int]]:
        return [(self.qudit_of[a], self.qudit_of[b]) for a, b in self.edges]


def bonds_to_cluster(branch: Branch, graph: BondGraph, policy=None, first_id: int | None = None, max_branches=MAX_BRANCHES):
    """F on the lowest-id end of each bond, then project every site to one qudit."""
    policy = policy or Exhaustive()
    d = branch.d
    start = dict(branch.frame.entries)
    st = branch.state
    # F on one end per bond: X^x Z^z -> X^-z Z^x
    for a, b in graph.bonds:
        p = min(a, b)
        st = st.apply(F(d, p))
    frame = PauliFrame(d)
    for a, b in graph.bonds:
        p = min(a, b)
        for q in (a, b):
            x, z = start.get(q, (0, 0))
            if q == p:
                x, z = -z, x
            frame.add(q, x, z)
    for q, (x, z) in start.items():
        if q not in graph.owner:
            frame.add(q, x, z)
    base = Branch(st, frame, branch.clusters.copy(), list(branch.records), list(branch.log), branch.prob)
    first = first_id if first_id is not None else max(branch.state.partons, default=-1) + 1
    qudit_of = {s: first + i for i, s in enumerate(sorted(graph.sites))}
    owner = graph.owner
    done: set[int] = set()
    branches = [base]
    for s in sorted(graph.sites):
        partons = tuple(sorted(graph.sites[s]))
        new = qudit_of[s]

        def project(b: Branch, partons=partons, new=new, s=s):
            out = []
            basis = logical_projection(d, len(partons))
            for rec, post, pr in b.state.measure(partons, basis, policy, new_ids=(new,)):
                c = b.child(post, rec, pr)
                frames = [c.frame.pop(p) for p in partons]
                xk = frames[-1][0]
                c.frame.add(new, x=xk, z=sum(f[1] for f in frames))
                for i, p in enumerate(partons[:-1]):
                    m_eff = (rec.outcome[i] + frames[i][0] - xk) % d
                    if not m_eff:
                        continue
                    far = graph.partner(p)
                    target = qudit_of[owner[far]] if owner[far] in done else far
                    c.frame.add(target, z=-m_eff)
                _frame_note(c, "logical_projection", site=s, qudit=new, outcome=list(rec.outcome))
                out.append(c)
            return out

        branches = expand(branches, project, max_branches)
        done.add(s)
    return [LogicalRegister(qudit_of, graph.logical_edges(), b) for b in branches]


def cluster_reference(d: int, qudits, edges) -> SparseState:
    """prod CZ~ on |+~>^n, one CZ~ per edge (repeated edges repeat the gate)."""
    qudits = tuple(qudits)
    n = len(qudits)
    keys = np.array(list(itertools.product(range(d), repeat=n)), dtype=np.int64).reshape(d**n, n)
    st = SparseState(d, qudits, keys, np.full(d**n, d ** (-n / 2), dtype=complex))
    for a, b in edges:
        st = apply(CZ(d, a, b), st)
    return st


@dataclass
class ClusterReport:
    passed: bool
    d: int
    stabilizers: dict[int, float] | None
    overlap: float
    violated: list[int]

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "d": self.d,
            "stabilizers": None if self.stabilizers is None else {str(k): v for k, v in self.stabilizers.items()},
            "overlap": self.overlap,
            "violated": self.violated,
        }


def stabilizer_values(state: SparseState, edges) -> dict[int, float]:
    """<K_a> with K_a = X_a prod_{b~a} Z_b for qubits."""
    from .qstate import X as Xop, Z as Zop

    out = {}
    for a in state.partons:
        s = apply(Xop(2, a), state)
        for u, v in edges:
            if u == a:
                s = apply(Zop(2, v), s)
            elif v == a:
                s = apply(Zop(2, u), s)
        out[a] = float(np.real(overlap(state, s)))
    return out


def verify_cluster(reg: LogicalRegister, corrected: bool = True, tol: float = 1e-10) -> ClusterReport:
    state = reg.corrected_state() if corrected else reg.raw_state()
    edges = reg.qudit_edges()
    ref = cluster_reference(reg.d, reg.qudits(), edges)
    ov = abs(overlap(ref, state.normalized()))
    if reg.d == 2:
        vals = stabilizer_values(state.normalized(), edges)
        violated = [q for q, v in vals.items() if abs(v - 1) > tol]
        return ClusterReport(not violated and abs(ov - 1) < tol, 2, vals, ov, violated)
    return ClusterReport(abs(ov - 1) < tol, reg.d, None, ov, [])


# ---------------------------------------------------------------------------
# gate teleportation


def _pure_branch(d: int, comps, groups) -> Branch:
    return Branch(ProductState(d, comps), PauliFrame(d), Clusters.from_groups(groups))


def teleport_single(U, eta, policy=None, in_frame=(0, 0)) -> list[tuple[SparseState, PauliFrame, MeasurementRecord, float]]:
    """Input on qudit 1, bond on (2, 3); N(U) on (1, 2). Output on qudit 3.

    ``in_frame`` is a Pauli frame already present on the input; the
    measurement basis is adapted to it.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    if U.shape != (d, d) or not np.allclose(U.conj().T @ U, np.eye(d), atol=1e-12):
        raise PlanError("teleported gate must be a unitary matrix")
    eta = np.asarray(eta, dtype=complex)
    root = _pure_branch(d, [SparseState.from_dense(d, (1,), eta), bell_pair(d, 2, 3)], [[1], [2, 3]])
    if in_frame != (0, 0):
        root.frame.add(1, *in_frame)
    out = []
    for b in op_joint(root, (1, 2), twisted_n_basis(U), policy or Exhaustive()):
        r, s = b.records[-1].outcome
        b.frame.add(3, x=-r, z=-s)
        out.append((b.state.component(3), b.frame.restricted((3,)), b.records[-1], b.prob))
    return out


def teleport_cz(chi, d: int, policy=None):
    """Input on qudits (1, 5); bonds 2-6, 3-4, 7-8; O on (1,2,3), W on (5,6,7).

    Output on (4, 8) equals CZ~ chi up to the returned frame.
    """
    chi = np.asarray(chi, dtype=complex)
    if chi.size != d * d:
        raise PlanError("two-qudit input expected")
    root = _pure_branch(
        d,
        [SparseState.from_dense(d, (1, 5), chi), bell_pair(d, 2, 6), bell_pair(d, 3, 4), bell_pair(d, 7, 8)],
        [[1, 5], [2, 6], [3, 4], [7, 8]],
    )
    return [_cz_frames(b) for b in teleport_cz_branches([root], (1, 5), (2, 3, 4), (6, 7, 8), policy or Exhaustive())]


def teleport_cz_branches(branches, inputs, left, right, policy):
    """Measure O on (in_a, l2, l3) and W on (in_b, r6, r7); outputs l4, r8."""
    ia, ib = inputs
    l2, l3, l4 = left
    r6, r7, r8 = right
    d = branches[0].d
    O, W = twisted_o_basis(d), twisted_w_basis(d)
    branches = expand(branches, lambda b: op_joint(b, (ia, l2, l3), O, policy))
    branches = expand(branches, lambda b: op_joint(b, (ib, r6, r7), W, policy))
    for b in branches:
        r, s, t = b.records[-2].outcome
        u, v, w = b.records[-1].outcome
        b.frame.add(l4, x=t - r, z=-(s + u))
        b.frame.add(r8, x=w - u, z=-(v + r))
    return branches


def _cz_frames(b: Branch):
    return (b.state.restricted((4, 8)), b.frame.restricted((4, 8)), b.records[-2:], b.prob)


# ---------------------------------------------------------------------------
# circuits


@dataclass(frozen=True)
class Gate:
    name: str
    targets: tuple[int, ...]
    matrix: np.ndarray | None = field(default=None, compare=False)

    def unitary(self, d: int) -> np.ndarray:
        if self.matrix is not None:
            return np.asarray(self.matrix, dtype=complex)
        named = {
            "I": np.eye(d),
            "F": fourier_matrix(d),
            "X": pauli_matrix(d, 1, 0),
            "Z": pauli_matrix(d, 0, 1),
        }
        if self.name == "H":
            if d != 2:
                raise PlanError("H is a qubit gate; use F for qudits")
            return fourier_matrix(2)
        if self.name == "CZ":
            return np.diag([omega(d) ** (j * k % d) for j in range(d) for k in range(d)])
        if self.name not in named:
            raise PlanError(f"unknown gate {self.name!r}")
        return named[self.name]


def _parse_matrix(m) -> np.ndarray:
    arr = []
    for row in m:
        out = []
        for x in row:
            if isinstance(x, (list, tuple)):
                out.append(complex(x[0], x[1]))
            else:
                out.append(complex(x))
        arr.append(out)
    return np.array(arr, dtype=complex)


def parse_circuit(data) -> list[Gate]:
    """A JSON array of {gate: name | matrix, targets: [...]}."""
    if isinstance(data, dict):
        data = data.get("gates", data)
    gates = []
    for n, rec in enumerate(data):
        extra = set(rec) - {"gate", "targets"}
        if extra:
            raise PlanError(f"circuit[{n}]: unknown field(s) {sorted(extra)}")
        g = rec["gate"]
        targets = tuple(int(t) for t in rec["targets"])
        if isinstance(g, str):
            gates.append(Gate(g.upper(), targets))
        else:
            gates.append(Gate("U", targets, _parse_matrix(g)))
        want = 2 if gates[-1].name == "CZ" else 1
        if len(targets) != want:
            raise PlanError(f"circuit[{n}]: gate {gates[-1].name} needs {want} target(s)")
    return gates


def circuit_width(circuit) -> int:
    return max((t for g in circuit for t in g.targets), default=-1) + 1


def circuit_reference(circuit, d: int, n: int | None = None) -> np.ndarray:
    """Dense simulation from |0...0>."""
    n = circuit_width(circuit) if n is None else n
    psi = np.zeros(d**n, dtype=complex)
    psi[0] = 1
    for g in circuit:
        U = g.unitary(d)
        t = psi.reshape((d,) * n)
        k = len(g.targets)
        t = np.moveaxis(t, g.targets, list(range(k))).reshape(d**k, -1)
        t = (U @ t).reshape((d,) * n)
        psi = np.moveaxis(t, list(range(k)), g.targets).reshape(-1)
    return psi


@dataclass
class FaceResource:
    """GHZ faces handed out in order to the circuit runner."""

    d: int
    faces: list[tuple[int, ...]]

    @classmethod
    def from_lattice(cls, lat, d: int) -> FaceResource:
        return cls(d, [f.cycle for f in lat.faces])


@dataclass
class CircuitResult:
    branch: Branch
    outputs: list[int]

    def raw_state(self) -> SparseState:
        return self.branch.state.restricted(self.outputs).permuted(self.outputs)

    def corrected_state(self) -> SparseState:
        fr = self.branch.frame.restricted(self.outputs)
        return fr.correct(self.raw_state()).permuted(self.outputs)

    def fidelity_with(self, psi: np.ndarray) -> float:
        d = self.branch.d
        ref = SparseState.from_dense(d, tuple(self.outputs), psi)
        return fidelity(self.corrected_state().normalized(), ref)


class _Runner:
    def __init__(self, resource: FaceResource, policy, order: str, seed: int | None):
        if order not in ("before", "after", "shuffle"):
            raise PlanError("reduction order must be before, after or shuffle")
        self.d = resource.d
        self.queue = list(resource.faces)
        self.policy = policy
        self.order = order
        self.rng = np.random.default_rng(seed)
        self.pending: dict[int, list[int]] = {}  # output end -> partons awaiting X~
        self.prefer: set[int] = set()

    def take(self, min_len: int = 2) -> tuple[int, ...]:
        while self.queue:
            f = self.queue.pop(0)
            if len(f) >= min_len:
                return tuple(f)
        raise ResourceError("resource lattice has no faces left for the circuit")

    def open_face(self, branches, face):
        """Add a face as a GHZ cluster; returns (branches, input end, output end)."""
        e_in, e_out = face[0], face[1]
        rest = list(face[2:])
        for b in branches:
            b.state = ProductState(self.d, b.state.components + [SparseState.ghz(self.d, face)])
            b.clusters.add_group(face)
        self.prefer.add(e_out)
        if self.order == "before":
            branches = self.reduce(branches, rest)
        else:
            self.pending[e_out] = rest
        return branches, e_in, e_out

    def reduce(self, branches, partons):
        partons = list(partons)
        if self.order == "shuffle":
            self.rng.shuffle(partons)
        for p in partons:
            branches = expand(branches, lambda b, p=p: op_x_tilde(b, p, self.policy, self.prefer))
        return branches

    def flush(self, branches, end):
        rest = self.pending.pop(end, None)
        if rest:
            branches = self.reduce(branches, rest)
        return branches

    def flush_all(self, branches):
        ends = list(self.pending)
        if self.order == "shuffle":
            self.rng.shuffle(ends)
        for e in ends:
            branches = self.flush(branches, e)
        return branches


def run_circuit(
    circuit,
    resource: FaceResource,
    policy=None,
    order: str = "before",
    seed: int | None = None,
    n: int | None = None,
    max_branches: int = MAX_BRANCHES,
) -> list[CircuitResult]:
    """Teleport a circuit through GHZ faces of a resource.

    Each logical qudit starts from a face whose input end is measured in the
    computational basis. A single-qudit gate consumes one face, CZ~ three.
    ``order`` places each face's X~ reduction measurements right away
    ("before"), just before its output end is next used ("after"), or the
    latter with randomly permuted measurement order ("shuffle").
    """
    policy = policy or Exhaustive()
    d = resource.d
    n = circuit_width(circuit) if n is None else n
    run = _Runner(resource, policy, order, seed)
    branches = [Branch(ProductState(d, []), PauliFrame(d), Clusters())]
    where: list[int] = []
    for _ in range(n):
        branches, e_in, e_out = run.open_face(branches, run.take())
        branches = expand(branches, lambda b, e=e_in: op_computational(b, e, policy), max_branches)
        # the computational outcome leaves |k> = X^k |0>: frame already records it
        where.append(e_out)
    for g in circuit:
        U = g.unitary(d)
        if g.name == "CZ":
            a, b_ = g.targets
            faces = [run.take() for _ in range(3)]
            opened = []
            for f in faces:
                branches, e_in, e_out = run.open_face(branches, f)
                branches = run.flush(branches, e_out)
                opened.append((e_in, e_out))
            (p2, p6), (p3, p4), (p7, p8) = opened
            branches = run.flush(branches, where[a])
            branches = run.flush(branches, where[b_])
            branches = teleport_cz_branches(branches, (where[a], where[b_]), (p2, p3, p4), (p6, p7, p8), policy)
            where[a], where[b_] = p4, p8
            continue
        (q,) = g.targets
        branches = run.flush(branches, where[q])
        branches, e_in, e_out = run.open_face(branches, run.take())
        basis = twisted_n_basis(U)
        branches = expand(branches, lambda b, src=where[q], e=e_in: op_joint(b, (src, e), basis, policy), max_branches)
        for b in branches:
            r, s = b.records[-1].outcome
            b.frame.add(e_out, x=-r, z=-s)
        where[q] = e_out
    branches = run.flush_all(branches)
    return [CircuitResult(b, list(where)) for b in branches]
