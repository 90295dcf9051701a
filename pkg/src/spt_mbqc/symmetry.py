"""On-site symmetry operators, their global action, boundary MPUOs and CZX models.

Phases are tracked as integer exponents of ``exp(2 pi i / order)`` where
``order`` is the order of the cochain, so every cancellation is checked
exactly. A site operator acts as

    U(g) |a_1 ... a_k> = f(a, g, gbar) |g a_1 ... g a_k>

with ``f`` the product over corner pairs of cochain values evaluated at
``(a_i, a_{i+1}, g^-1 gbar, gbar)`` (ccw pairs) or the inverse of
``(a_{i+1}, a_i, g^-1 gbar, gbar)`` (cw pairs).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cohomology import Cochain3, PhaseExponent
from .groups import CapacityError, FiniteGroup
from .lattice import BranchingAssignment, Lattice, Site, check_branching
from .qstate import SparseState, plaquette_state

MAX_SITE_TABLE = 2**22


class SymmetryError(ValueError):
    pass


class RepresentationError(SymmetryError):
    pass


# ---------------------------------------------------------------------------
# site operators


def _all_assignments(n: int, k: int) -> np.ndarray:
    """Rows of G^k in lexicographic order, shape (n^k, k)."""
    if n**k > MAX_SITE_TABLE:
        raise CapacityError(f"site table with {n}^{k} entries exceeds {MAX_SITE_TABLE}")
    grids = np.meshgrid(*([np.arange(n)] * k), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def site_phase_table(nu: Cochain3, ia, ib, k: int, g: int, gbar: int) -> np.ndarray:
    """Exponent of f over all assignments, as an array of shape (n,)*k."""
    grp = nu.group
    h = int(grp.mul_table[grp.inv_table[g], gbar])
    alpha = _all_assignments(grp.order, k)
    exp = np.zeros(alpha.shape[0], dtype=np.int64)
    for label in ia:
        i = label - 1
        exp += nu.table[alpha[:, i], alpha[:, (i + 1) % k], h, gbar]
    for label in ib:
        i = label - 1
        exp -= nu.table[alpha[:, (i + 1) % k], alpha[:, i], h, gbar]
    return (exp % nu.order).reshape((grp.order,) * k)


@dataclass(frozen=True, eq=False)
class SiteSymmetryOp:
    site: int
    partons: tuple[int, ...]
    group: FiniteGroup
    g: int
    gbar: int
    order: int
    phase: np.ndarray

    @property
    def k(self) -> int:
        return len(self.partons)

    def phase_exponent(self, alpha) -> PhaseExponent:
        return PhaseExponent(int(self.phase[tuple(alpha)]), self.order)

    def act(self, alpha) -> tuple[PhaseExponent, tuple[int, ...]]:
        out = tuple(int(self.group.mul_table[self.g, a]) for a in alpha)
        return self.phase_exponent(alpha), out

    def is_pure_shift(self) -> bool:
        return not np.any(self.phase % self.order)

    def matrix(self) -> np.ndarray:
        n, k = self.group.order, self.k
        dim = n**k
        alpha = _all_assignments(n, k)
        out = self.group.mul_table[self.g][alpha]
        weights = n ** np.arange(k - 1, -1, -1)
        m = np.zeros((dim, dim), dtype=complex)
        vals = np.exp(2j * np.pi * self.phase.reshape(-1) / self.order)
        m[out @ weights, np.arange(dim)] = vals
        return m

    def apply(self, s: SparseState) -> SparseState:
        cols = [s.position(p) for p in self.partons]
        keys = s.keys.copy()
        sub = keys[:, cols]
        exps = self.phase[tuple(sub.T)]
        keys[:, cols] = self.group.mul_table[self.g][sub]
        amps = s.amps * np.exp(2j * np.pi * exps / self.order)
        return SparseState(s.d, s.partons, keys, amps)


def site_operator(nu: Cochain3, br: BranchingAssignment, site: Site, g: int, gbar: int = 1) -> SiteSymmetryOp:
    ia, ib = br.index_sets(site.id)
    k = len(site.partons)
    if (set(ia) | set(ib)) != set(range(1, k + 1)) or set(ia) & set(ib):
        raise SymmetryError(f"index sets of site {site.id} do not partition 1..{k}")
    grp = nu.group
    g, gbar = grp.index(g), grp.index(gbar)
    table = site_phase_table(nu, ia, ib, k, g, gbar)
    return SiteSymmetryOp(site.id, site.partons, grp, g, gbar, nu.order, table)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SymmetryReport:
    check: str
    passed: bool
    details: dict = field(default_factory=dict)
    violation: dict | None = None

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        out = {"check": self.check, "passed": self.passed, **self.details}
        if self.violation is not None:
            out["violation"] = self.violation
        return out


def verify_linear_rep(nu: Cochain3, ia, ib, k: int, gbar: int = 1) -> SymmetryReport:
    """U(g' g^-1) U(g) = U(g') exactly, for all g, g' and all assignments."""
    grp = nu.group
    n = grp.order
    tables = [site_phase_table(nu, ia, ib, k, g, gbar).reshape(-1) for g in range(n)]
    alpha = _all_assignments(n, k)
    weights = n ** np.arange(k - 1, -1, -1)
    shifted = [grp.mul_table[g][alpha] @ weights for g in range(n)]
    pairs = 0
    for g in range(n):
        for gp in range(n):
            h = int(grp.mul_table[gp, grp.inv_table[g]])
            lhs = (tables[h][shifted[g]] + tables[g]) % nu.order
            rhs = tables[gp]
            pairs += 1
            bad = np.flatnonzero(lhs != rhs)
            if bad.size:
                a = bad[0]
                return SymmetryReport(
                    "linear_representation",
                    False,
                    {"k": k, "pairs_checked": pairs, "order": nu.order},
                    {
                        "invariant": "U(g'g^-1)U(g) = U(g')",
                        "g": g,
                        "g_prime": gp,
                        "assignment": [int(x) for x in alpha[a]],
                        "lhs_exponent": int(lhs[a]),
                        "rhs_exponent": int(rhs[a]),
                    },
                )
    return SymmetryReport(
        "linear_representation",
        True,
        {"k": k, "pairs_checked": pairs, "assignments": int(n**k), "order": nu.order},
    )


def global_phase_exponents(nu: Cochain3, br: BranchingAssignment, lat: Lattice, g: int, gbar: int = 1, state=None):
    """Per-term exponent of the product of all site operators on the plaquette state.

    Returns ``(state, exponents, shifted_keys)``.
    """
    grp = nu.group
    st = state if state is not None else plaquette_state(lat, grp.order)
    exps = np.zeros(st.n_terms, dtype=np.int64)
    keys = st.keys.copy()
    for site in lat.sites:
        op = site_operator(nu, br, site, g, gbar)
        cols = [st.position(p) for p in site.partons]
        sub = st.keys[:, cols]
        exps += op.phase[tuple(sub.T)]
        keys[:, cols] = grp.mul_table[op.g][sub]
    return st, exps % nu.order, keys


def verify_global_symmetry(nu: Cochain3, br: BranchingAssignment, lat: Lattice, gbar: int = 1) -> SymmetryReport:
    """Apply the product of site operators for every g; demand F_3 = 1 exactly."""
    grp = nu.group
    if not lat.periodic:
        raise SymmetryError("global symmetry is defined on periodic lattices")
    gbar = grp.index(gbar)
    per_g = {}
    st = plaquette_state(lat, grp.order)
    support = {tuple(int(x) for x in row) for row in st.keys}
    failure = None
    for g in range(grp.order):
        _, exps, keys = global_phase_exponents(nu, br, lat, g, gbar, st)
        if {tuple(int(x) for x in row) for row in keys} != support:
            failure = failure or {"invariant": "symmetry maps the plaquette support onto itself", "g": g}
            per_g[g] = None
            continue
        uniq = np.unique(exps)
        if uniq.size == 1:
            per_g[g] = PhaseExponent(int(uniq[0]), nu.order).reduced()
            if not per_g[g].is_one() and failure is None:
                failure = {"invariant": "F_3 = 1", "g": g, "F3": per_g[g].to_json()}
        else:
            per_g[g] = None
            if failure is None:
                bad = int(np.flatnonzero(exps != exps[0])[0])
                failure = {
                    "invariant": "F_3 = 1 (phase differs between plaquette configurations)",
                    "g": g,
                    "assignment": {str(p): int(v) for p, v in zip(st.partons, st.keys[bad])},
                    "exponent": int(exps[bad]),
                    "reference_exponent": int(exps[0]),
                }
    details = {
        "lattice": lat.name,
        "group": grp.spec.name,
        "gbar": gbar,
        "terms": st.n_terms,
        "F3": {str(g): (v.to_json() if v is not None else None) for g, v in per_g.items()},
    }
    orient = check_branching(lat, br)
    if not orient.passed:
        details["branching_violations"] = [list(v) for v in orient.violations]
    return SymmetryReport("global_symmetry", failure is None, details, failure)


# ---------------------------------------------------------------------------
# boundary action and MPUO


@dataclass(frozen=True)
class Boundary:
    """Cyclic chain of boundary plaquette slots.

    ``directions[i]`` is +1 when the bond between slot i and slot i+1 runs
    i -> i+1 and -1 when it runs i+1 -> i.
    """

    directions: tuple[int, ...]

    def __post_init__(self):
        dirs = tuple(int(x) for x in self.directions)
        if any(x not in (1, -1) for x in dirs):
            raise SymmetryError("bond directions must be +1 or -1")
        if len(dirs) < 2:
            raise SymmetryError("a cyclic boundary needs at least two slots")
        object.__setattr__(self, "directions", dirs)

    @property
    def length(self) -> int:
        return len(self.directions)

    @classmethod
    def uniform(cls, length: int, direction: int = 1) -> Boundary:
        return cls((direction,) * length)


def _bond_exponent(nu: Cochain3, direction: int, a, b, h: int, gbar: int):
    if direction == 1:
        return -nu.table[a, b, h, gbar]
    return nu.table[b, a, h, gbar]


def boundary_action(nu: Cochain3, boundary: Boundary, g, gbar, alpha) -> PhaseExponent:
    """Product over boundary bonds of nu^{+-1}(., ., g^-1 gbar, gbar)."""
    grp = nu.group
    g, gbar = grp.index(g), grp.index(gbar)
    h = int(grp.mul_table[grp.inv_table[g], gbar])
    L = boundary.length
    if len(alpha) != L:
        raise SymmetryError(f"assignment of length {len(alpha)} for a boundary of length {L}")
    exp = 0
    for i, direction in enumerate(boundary.directions):
        exp += int(_bond_exponent(nu, direction, alpha[i], alpha[(i + 1) % L], h, gbar))
    return PhaseExponent(exp % nu.order, nu.order)


def boundary_phase_table(nu: Cochain3, boundary: Boundary, g, gbar) -> np.ndarray:
    """boundary_action exponents over every assignment, shape (n,)*L."""
    grp = nu.group
    g, gbar = grp.index(g), grp.index(gbar)
    h = int(grp.mul_table[grp.inv_table[g], gbar])
    L = boundary.length
    alpha = _all_assignments(grp.order, L)
    exp = np.zeros(alpha.shape[0], dtype=np.int64)
    for i, direction in enumerate(boundary.directions):
        exp += _bond_exponent(nu, direction, alpha[:, i], alpha[:, (i + 1) % L], h, gbar)
    return (exp % nu.order).reshape((grp.order,) * L)


@dataclass(frozen=True, eq=False)
class BoundaryMPUO:
    """Tensors T_i[a_in, v, v'] over Z[x]/(x^order - 1).

    ``tensors[i][a, v, v', :]`` are integer coefficients of the ring element
    at physical input ``a`` (output ``g a``) and virtual indices ``(v, v')``.
    """

    group: FiniteGroup
    order: int
    g: int
    gbar: int
    tensors: tuple[np.ndarray, ...]

    @property
    def length(self) -> int:
        return len(self.tensors)

    def physical_output(self, alpha) -> tuple[int, ...]:
        return tuple(int(self.group.mul_table[self.g, a]) for a in alpha)


def boundary_mpuo(nu: Cochain3, boundary: Boundary, g, gbar) -> BoundaryMPUO:
    grp = nu.group
    g, gbar = grp.index(g), grp.index(gbar)
    h = int(grp.mul_table[grp.inv_table[g], gbar])
    n, N = grp.order, nu.order
    tensors = []
    for direction in boundary.directions:
        t = np.zeros((n, n, n, N), dtype=np.int64)
        for a in range(n):
            for b in range(n):
                e = int(_bond_exponent(nu, direction, a, b, h, gbar)) % N
                # only the row v = a is populated: the virtual index copies the slot
                t[a, a, b, e] = 1
        tensors.append(t)
    return BoundaryMPUO(grp, N, g, gbar, tuple(tensors))


def _ring_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix product with entries in Z[x]/(x^N - 1); shapes (m, k, N), (k, p, N)."""
    N = A.shape[-1]
    out = np.zeros((A.shape[0], B.shape[1], N), dtype=np.int64)
    for s in range(N):
        if not A[..., s].any():
            continue
        prod = np.einsum("mk,kpt->mpt", A[..., s], B)
        out += np.roll(prod, s, axis=-1)
    return out


def contract(mpuo: BoundaryMPUO, alpha) -> PhaseExponent:
    """Trace of the tensor train at physical input ``alpha``; must be a monomial."""
    if len(alpha) != mpuo.length:
        raise SymmetryError("assignment length does not match the MPUO")
    n, N = mpuo.group.order, mpuo.order
    acc = np.zeros((n, n, N), dtype=np.int64)
    acc[np.arange(n), np.arange(n), 0] = 1
    for t, a in zip(mpuo.tensors, alpha):
        acc = _ring_matmul(acc, t[a])
    trace = acc[np.arange(n), np.arange(n)].sum(axis=0)
    nz = np.flatnonzero(trace)
    if nz.size != 1 or trace[nz[0]] != 1:
        raise SymmetryError(f"MPUO contraction is not a single phase: coefficients {trace.tolist()}")
    return PhaseExponent(int(nz[0]), N)


def verify_boundary(nu: Cochain3, boundary: Boundary, gbar=1) -> SymmetryReport:
    """MPUO contraction equals boundary_action on every assignment and every g."""
    grp = nu.group
    L = boundary.length
    checked = 0
    for g in range(grp.order):
        mp = boundary_mpuo(nu, boundary, g, gbar)
        table = boundary_phase_table(nu, boundary, g, gbar)
        for alpha in itertools.product(range(grp.order), repeat=L):
            got = contract(mp, alpha)
            want = PhaseExponent(int(table[alpha]), nu.order)
            checked += 1
            if got != want:
                return SymmetryReport(
                    "boundary_mpuo",
                    False,
                    {"length": L, "checked": checked},
                    {"g": g, "assignment": list(alpha), "mpuo": got.to_json(), "direct": want.to_json()},
                )
    return SymmetryReport("boundary_mpuo", True, {"length": L, "checked": checked, "order": nu.order})


def boundary_from_lattice(lat: Lattice, br: BranchingAssignment) -> tuple[Boundary, tuple[int, ...]]:
    """Boundary slots (partial faces) of an open lattice with bond directions.

    Each dangling corner pair joins two boundary faces. The slots are
    chained so that slot ``i + 1`` is the face of the pair's first parton
    when slot ``i`` holds its second one; a ccw ('a') pair then contributes
    ``nu(a_{i+1}, a_i)`` and a cw ('b') pair ``nu(a_i, a_{i+1})^-1``.
    """
    if lat.periodic:
        raise SymmetryError("periodic lattices have no boundary")
    step = {}
    for v, i in lat.dangling_pairs:
        p, p2 = lat.corner_pair(v, i)
        f1, f2 = lat.parton_face[p], lat.parton_face[p2]
        if f2 in step:
            raise SymmetryError(f"boundary face {f2} starts two dangling bonds; boundary is not a simple cycle")
        step[f2] = (f1, br.pair_type(v, i))
    if not step:
        raise SymmetryError("lattice has no dangling bonds")
    start = min(step)
    order = [start]
    dirs = []
    cur = start
    while True:
        nxt, kind = step[cur]
        dirs.append(1 if kind == "b" else -1)
        if nxt == start:
            break
        if nxt in order or nxt not in step:
            raise SymmetryError("boundary bonds do not form a single cycle")
        order.append(nxt)
        cur = nxt
    if len(order) != len(step):
        raise SymmetryError("boundary bonds form more than one cycle")
    return Boundary(tuple(dirs)), tuple(order)


def open_lattice_phases(nu: Cochain3, br: BranchingAssignment, lat: Lattice, g, gbar=1):
    """Exponent of the site-operator product on each term of an open plaquette state.

    Returns ``(slots, table)`` where ``table`` maps each boundary assignment
    to the set of exponents seen (bulk independence means one per key).
    """
    grp = nu.group
    g, gbar = grp.index(g), grp.index(gbar)
    _, slots = boundary_from_lattice(lat, br)
    st = plaquette_state(lat, grp.order)
    _, exps, _ = global_phase_exponents(nu, br, lat, g, gbar, st)
    rep = {f: lat.face_by_id[f].cycle[0] for f in slots}
    cols = [st.position(rep[f]) for f in slots]
    table: dict[tuple[int, ...], set[int]] = {}
    for row, e in zip(st.keys, exps):
        table.setdefault(tuple(int(row[c]) for c in cols), set()).add(int(e))
    return slots, table


# ---------------------------------------------------------------------------
# CZX model (qubits)

_CZX_VARIANTS = ("czx", "iczx", "sczx")


def _bits(k: int) -> np.ndarray:
    idx = np.arange(2**k)
    return (idx[:, None] >> np.arange(k - 1, -1, -1)) & 1


def czx_site_matrix(k: int, variant: str = "czx", ia=None, ib=None) -> np.ndarray:
    """Dense 2^k unitary of one CZX-type site operator.

    czx  : U_X U_CZ with CZ on cyclically adjacent partons
    iczx : U_CZ U_iX
    sczx : U_X U_sCZ; the control of pair i is parton i for ccw pairs and
           parton i+1 for cw pairs, sCZ = |0><0| (x) Z + |1><1| (x) 1
    """
    if variant not in _CZX_VARIANTS:
        raise SymmetryError(f"unknown CZX variant {variant!r}")
    bits = _bits(k)
    dim = 2**k
    flip = np.arange(dim) ^ (dim - 1)
    ux = np.zeros((dim, dim), dtype=complex)
    ux[flip, np.arange(dim)] = 1
    if variant == "sczx":
        if ia is None or ib is None:
            raise SymmetryError("sczx needs the site's index sets")
        exp = np.zeros(dim, dtype=np.int64)
        for label in range(1, k + 1):
            i, j = label - 1, label % k
            c, t = (i, j) if label in ia else (j, i)
            exp += (1 - bits[:, c]) * bits[:, t]
        return ux @ np.diag((-1.0) ** exp)
    exp = np.zeros(dim, dtype=np.int64)
    for i in range(k):
        exp += bits[:, i] * bits[:, (i + 1) % k]
    ucz = np.diag((-1.0 + 0j) ** exp)
    if variant == "czx":
        return ux @ ucz
    return ucz @ (ux * (1j**k))


@dataclass(frozen=True, eq=False)
class CZXOperatorSet:
    lattice: Lattice
    variant: str
    ops: dict[int, np.ndarray]

    def square_deviation(self) -> float:
        return max(float(np.max(np.abs(m @ m - np.eye(m.shape[0])))) for m in self.ops.values())


def czx_operators(lat: Lattice, variant: str = "czx", br: BranchingAssignment | None = None) -> CZXOperatorSet:
    ops = {}
    for site in lat.sites:
        k = len(site.partons)
        if variant == "czx" and k % 2:
            raise RepresentationError(
                f"site {site.id} has {k} partons: U_CZX^2 = -1, so czx is not a Z2 representation; "
                "use iczx or sczx"
            )
        ia = ib = None
        if variant == "sczx":
            br = br or lat.branching_assignment()
            if br is None:
                raise SymmetryError("sczx needs a branching assignment")
            ia, ib = br.index_sets(site.id)
        ops[site.id] = czx_site_matrix(k, variant, ia, ib)
    return CZXOperatorSet(lat, variant, ops)


class DenseQubits:
    """Dense state-vector helpers for a few-parton qubit lattice."""

    def __init__(self, lat: Lattice, max_partons: int = 20):
        self.lat = lat
        self.partons = lat.partons
        self.n = len(self.partons)
        if self.n > max_partons:
            raise CapacityError(f"{self.n} partons exceed the dense bound {max_partons}")
        self.pos = {p: i for i, p in enumerate(self.partons)}
        self.idx = np.arange(2**self.n)

    def bit(self, p: int) -> np.ndarray:
        return (self.idx >> (self.n - 1 - self.pos[p])) & 1

    def mask(self, partons) -> int:
        m = 0
        for p in partons:
            m |= 1 << (self.n - 1 - self.pos[p])
        return m

    def ground_state(self) -> np.ndarray:
        ok = np.ones(2**self.n, dtype=bool)
        for f in self.lat.faces:
            b0 = self.bit(f.cycle[0])
            for p in f.cycle[1:]:
                ok &= self.bit(p) == b0
        for p in self.lat.free_partons():
            ok &= self.bit(p) == 0
        psi = ok.astype(complex)
        return psi / np.linalg.norm(psi)

    def apply_site(self, psi: np.ndarray, partons, m: np.ndarray) -> np.ndarray:
        k = len(partons)
        t = psi.reshape((2,) * self.n)
        axes = [self.pos[p] for p in partons]
        t = np.moveaxis(t, axes, list(range(k))).reshape(2**k, -1)
        t = (m @ t).reshape((2,) * self.n)
        return np.moveaxis(t, list(range(k)), axes).reshape(-1)

    def apply_global(self, psi: np.ndarray, ops: CZXOperatorSet) -> np.ndarray:
        for site in self.lat.sites:
            psi = self.apply_site(psi, site.partons, ops.ops[site.id])
        return psi


def hamiltonian_term_supports(lat: Lattice) -> list[tuple[int, list[list[int]]]]:
    """For each face: (face id, projector groups on edge-neighbouring faces).

    A projector group lists the partons of a neighbouring face that sit on
    sites of the central face.
    """
    adj = lat.face_adjacency()
    out = []
    for f in lat.faces:
        sites = set(lat.face_sites(f.id))
        groups = []
        for nb in sorted(adj[f.id]):
            grp = [p for p in lat.face_by_id[nb].cycle if lat.parton_site[p] in sites]
            if len(grp) >= 2:
                groups.append(grp)
        out.append((f.id, groups))
    return out


def apply_term(dq: DenseQubits, psi: np.ndarray, face_id: int, groups) -> np.ndarray:
    """H_p = -X_face (x) prod P on the neighbouring groups."""
    face = dq.lat.face_by_id[face_id].cycle
    fmask = dq.mask(face)
    bits = [dq.bit(p) for p in face]
    all0 = np.all([b == 0 for b in bits], axis=0)
    all1 = np.all([b == 1 for b in bits], axis=0)
    cond = np.ones_like(all0)
    for grp in groups:
        b0 = dq.bit(grp[0])
        for p in grp[1:]:
            cond &= dq.bit(p) == b0
    src = np.flatnonzero((all0 | all1) & cond)
    out = np.zeros_like(psi)
    out[src ^ fmask] = -psi[src]
    return out


def czx_hamiltonian_check(
    lat: Lattice, variant: str = "czx", n_random: int = 20, seed: int = 0, br=None
) -> SymmetryReport:
    """Ground-state energy per term and commutation with the global CZX product."""
    dq = DenseQubits(lat)
    ops = czx_operators(lat, variant, br)
    terms = hamiltonian_term_supports(lat)
    psi = dq.ground_state()
    energies = []
    eig_dev = 0.0
    for fid, groups in terms:
        hpsi = apply_term(dq, psi, fid, groups)
        energies.append(float(np.vdot(psi, hpsi).real))
        eig_dev = max(eig_dev, float(np.max(np.abs(hpsi + psi))))
    total = np.zeros_like(psi)
    for fid, groups in terms:
        total += apply_term(dq, psi, fid, groups)
    energy_dev = float(np.max(np.abs(total + len(terms) * psi)))
    rng = np.random.default_rng(seed)
    comm = 0.0
    for _ in range(n_random):
        phi = rng.normal(size=psi.shape) + 1j * rng.normal(size=psi.shape)
        phi /= np.linalg.norm(phi)
        uphi = dq.apply_global(phi, ops)
        for fid, groups in terms:
            a = apply_term(dq, uphi, fid, groups)
            b = dq.apply_global(apply_term(dq, phi, fid, groups), ops)
            comm = max(comm, float(np.linalg.norm(a - b)))
    gs_sym = float(np.linalg.norm(dq.apply_global(psi, ops) - psi))
    tol = 1e-12
    passed = eig_dev < tol and energy_dev < tol and comm < tol
    details = {
        "lattice": lat.name,
        "variant": variant,
        "terms": len(terms),
        "energy": float(np.vdot(psi, total).real),
        "term_energies": energies,
        "max_eigen_deviation": eig_dev,
        "max_commutator_norm": comm,
        "ground_state_symmetry_deviation": gs_sym,
        "square_deviation": ops.square_deviation(),
    }
    violation = None
    if not passed:
        violation = {"invariant": "H_p|gs> = -|gs> and [H_p, U] = 0", "eigen": eig_dev, "commutator": comm}
    return SymmetryReport("czx_hamiltonian", passed, details, violation)
