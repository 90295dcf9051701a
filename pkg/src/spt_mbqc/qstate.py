"""Sparse many-qudit states, local operators, measurements and Pauli frames.

A :class:`SparseState` stores the nonzero computational-basis terms as an
integer digit matrix ``keys`` (one row per term, one column per parton) and a
matching complex ``amps`` vector. Plaquette states are sums of a handful of
product terms, so this stays tiny even for dozens of partons.

Measurements are given as Kraus maps ``K[o]`` of shape ``(d^k_out, d^k_in)``.
Rank-one bases remove their targets (``k_out = 0``); logical projections
replace ``k`` partons by one fresh qudit.

Frame convention: a :class:`PauliFrame` entry ``(x, z)`` on qudit ``q`` means
``raw = X^x Z^z ideal`` on that qudit, up to a global phase.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .groups import CapacityError

DEFAULT_MAX_AMPS = 2**20
PRUNE = 1e-14
_ZERO = 1e-15


class StateError(ValueError):
    pass


class OutcomeError(StateError):
    pass


class BasisError(StateError):
    pass


def omega(d: int) -> complex:
    return complex(np.exp(2j * np.pi / d))


def _digits(index: int, d: int, k: int) -> tuple[int, ...]:
    out = []
    for _ in range(k):
        out.append(index % d)
        index //= d
    return tuple(reversed(out))


def _index(digits, d: int) -> int:
    idx = 0
    for x in digits:
        idx = idx * d + int(x)
    return idx


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class SparseState:
    d: int
    partons: tuple[int, ...]
    keys: np.ndarray
    amps: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amps, dtype=np.complex128).reshape(-1)
        keys = np.asarray(self.keys, dtype=np.int64).reshape(amps.shape[0], len(self.partons))
        if keys.shape[0] != amps.shape[0]:
            raise StateError("keys and amplitudes disagree in length")
        if len(set(self.partons)) != len(self.partons):
            raise StateError(f"duplicate partons in {self.partons}")
        object.__setattr__(self, "partons", tuple(int(p) for p in self.partons))
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "amps", amps)

    # -- constructors --------------------------------------------------------
    @classmethod
    def from_dict(cls, d: int, partons, amps: dict) -> SparseState:
        partons = tuple(partons)
        if not amps:
            return cls(d, partons, np.zeros((0, len(partons)), np.int64), np.zeros(0, complex))
        keys = np.array([list(k) for k in amps], dtype=np.int64).reshape(len(amps), len(partons))
        return cls(d, partons, keys, np.array(list(amps.values()), dtype=complex))._compact()

    @classmethod
    def basis_state(cls, d: int, partons, digits) -> SparseState:
        partons = tuple(partons)
        return cls(d, partons, np.array([list(digits)], dtype=np.int64).reshape(1, len(partons)), np.ones(1, complex))

    @classmethod
    def empty(cls, d: int) -> SparseState:
        return cls(d, (), np.zeros((1, 0), np.int64), np.ones(1, complex))

    @classmethod
    def ghz(cls, d: int, partons) -> SparseState:
        partons = tuple(partons)
        keys = np.repeat(np.arange(d, dtype=np.int64)[:, None], len(partons), axis=1)
        return cls(d, partons, keys, np.full(d, 1 / np.sqrt(d), dtype=complex))

    @classmethod
    def from_dense(cls, d: int, partons, vec, tol: float = _ZERO) -> SparseState:
        partons = tuple(partons)
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if vec.size != d ** len(partons):
            raise StateError(f"dense vector of size {vec.size} does not match {len(partons)} qudits of dim {d}")
        nz = np.flatnonzero(np.abs(vec) > tol)
        keys = np.array([_digits(int(i), d, len(partons)) for i in nz], dtype=np.int64).reshape(len(nz), len(partons))
        return cls(d, partons, keys, vec[nz])

    # -- basic queries -------------------------------------------------------
    @property
    def n_terms(self) -> int:
        return int(self.amps.shape[0])

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def normalized(self) -> SparseState:
        n = self.norm()
        if n < PRUNE:
            raise StateError("cannot normalise a null state")
        return SparseState(self.d, self.partons, self.keys, self.amps / n)

    def position(self, p: int) -> int:
        try:
            return self.partons.index(p)
        except ValueError:
            raise StateError(f"parton {p} is not part of the state") from None

    def as_dict(self) -> dict[tuple[int, ...], complex]:
        return {tuple(int(x) for x in row): complex(a) for row, a in zip(self.keys, self.amps)}

    def amplitude(self, digits) -> complex:
        target = np.asarray(digits, dtype=np.int64)
        hit = np.flatnonzero(np.all(self.keys == target, axis=1))
        return complex(self.amps[hit].sum()) if hit.size else 0j

    def dump(self) -> list[tuple[str, float, float]]:
        """Sorted (assignment, re, im) records for golden-file comparisons."""
        rows = [("".join(str(int(x)) for x in k), float(a.real), float(a.imag)) for k, a in zip(self.keys, self.amps)]
        return sorted(rows)

    def to_dense(self, order=None, max_dim: int = 2**22) -> np.ndarray:
        order = tuple(order) if order is not None else self.partons
        st = self.permuted(order)
        dim = self.d ** len(order)
        if dim > max_dim:
            raise CapacityError(f"dense vector of dimension {dim} exceeds {max_dim}")
        vec = np.zeros(dim, dtype=complex)
        if st.n_terms:
            weights = self.d ** np.arange(len(order) - 1, -1, -1, dtype=np.int64)
            np.add.at(vec, st.keys @ weights, st.amps)
        return vec

    # -- structure -----------------------------------------------------------
    def _compact(self) -> SparseState:
        if self.n_terms == 0:
            return self
        uniq, inv = np.unique(self.keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        amps = np.zeros(uniq.shape[0], dtype=complex)
        np.add.at(amps, inv, self.amps)
        keep = np.abs(amps) > _ZERO
        return SparseState(self.d, self.partons, uniq[keep], amps[keep])

    def permuted(self, order) -> SparseState:
        order = tuple(order)
        if sorted(order) != sorted(self.partons):
            raise StateError(f"cannot reorder {self.partons} as {order}")
        cols = [self.partons.index(p) for p in order]
        return SparseState(self.d, order, self.keys[:, cols], self.amps)

    def tensor(self, other: SparseState, max_amps: int = DEFAULT_MAX_AMPS) -> SparseState:
        if other.d != self.d:
            raise StateError("cannot tensor states of different local dimension")
        if set(self.partons) & set(other.partons):
            raise StateError("tensor factors share partons")
        n = self.n_terms * other.n_terms
        if n > max_amps:
            raise CapacityError(f"tensor product would hold {n} amplitudes > {max_amps}")
        ka = np.repeat(self.keys, other.n_terms, axis=0)
        kb = np.tile(other.keys, (self.n_terms, 1))
        amps = np.outer(self.amps, other.amps).reshape(-1)
        return SparseState(self.d, self.partons + other.partons, np.hstack([ka, kb]), amps)


def overlap(a: SparseState, b: SparseState) -> complex:
    """<a|b> computed over the shared sparse support."""
    if set(a.partons) != set(b.partons):
        raise StateError(f"overlap of states on different partons {a.partons} vs {b.partons}")
    if a.d != b.d:
        raise StateError("overlap of states with different local dimension")
    b = b.permuted(a.partons)
    table = a.as_dict()
    total = 0j
    for row, amp in zip(b.keys, b.amps):
        ca = table.get(tuple(int(x) for x in row))
        if ca is not None:
            total += np.conj(ca) * amp
    return complex(total)


def fidelity(a: SparseState, b: SparseState) -> float:
    return float(abs(overlap(a, b)) ** 2)


def plaquette_state(lattice, d: int, max_amps: int = DEFAULT_MAX_AMPS) -> SparseState:
    """Product over faces of d-level GHZ states; face-free partons sit in |0>."""
    nf = len(lattice.faces)
    if d**nf > max_amps:
        raise CapacityError(f"plaquette state needs d^faces = {d}^{nf} amplitudes > bound {max_amps}")
    return product_plaquette_state(lattice, d).to_sparse(max_amps)


def product_plaquette_state(lattice, d: int) -> ProductState:
    comps = [SparseState.ghz(d, f.cycle) for f in lattice.faces]
    for p in lattice.free_partons():
        comps.append(SparseState.basis_state(d, (p,), (0,)))
    return ProductState(d, comps)


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Operator on ``support``; ``kind`` is dense, diagonal or shift.

    ``shift`` data holds one integer per support parton: digit ``j`` maps to
    ``j + s`` mod d. ``diagonal`` data is the diagonal in the mixed-radix
    order of the support digits.
    """

    support: tuple[int, ...]
    d: int
    kind: str
    data: np.ndarray
    unitary: bool = True
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(p) for p in self.support))
        dim = self.d ** len(self.support)
        if self.kind == "dense":
            m = np.asarray(self.data, dtype=complex)
            if m.shape != (dim, dim):
                raise StateError(f"operator matrix shape {m.shape} does not match support dimension {dim}")
            object.__setattr__(self, "data", m)
            if self.unitary and not np.allclose(m.conj().T @ m, np.eye(dim), atol=1e-12):
                raise StateError(f"operator {self.label or ''} flagged unitary is not unitary")
        elif self.kind == "diagonal":
            diag = np.asarray(self.data, dtype=complex).reshape(-1)
            if diag.size != dim:
                raise StateError("diagonal length does not match support dimension")
            object.__setattr__(self, "data", diag)
            if self.unitary and not np.allclose(np.abs(diag), 1.0, atol=1e-12):
                raise StateError("diagonal operator flagged unitary has non-unit entries")
        elif self.kind == "shift":
            s = np.asarray(self.data, dtype=np.int64).reshape(-1)
            if s.size != len(self.support):
                raise StateError("shift vector must have one entry per support parton")
            object.__setattr__(self, "data", s % self.d)
        else:
            raise StateError(f"unknown operator kind {self.kind!r}")

    def matrix(self) -> np.ndarray:
        dim = self.d ** len(self.support)
        if self.kind == "dense":
            return self.data
        if self.kind == "diagonal":
            return np.diag(self.data)
        m = np.zeros((dim, dim), dtype=complex)
        for i in range(dim):
            dig = np.array(_digits(i, self.d, len(self.support)))
            m[_index((dig + self.data) % self.d, self.d), i] = 1
        return m

    def dagger(self) -> LocalOperator:
        if self.kind == "dense":
            return LocalOperator(self.support, self.d, "dense", self.data.conj().T, self.unitary, self.label + "^dag")
        if self.kind == "diagonal":
            return LocalOperator(self.support, self.d, "diagonal", self.data.conj(), self.unitary, self.label + "^dag")
        return LocalOperator(self.support, self.d, "shift", -self.data, True, self.label + "^dag")


def X(d: int, p: int, power: int = 1) -> LocalOperator:
    return LocalOperator((p,), d, "shift", [power], label=f"X^{power % d}")


def Z(d: int, p: int, power: int = 1) -> LocalOperator:
    w = omega(d)
    return LocalOperator((p,), d, "diagonal", [w ** ((power * j) % d) for j in range(d)], label=f"Z^{power % d}")


def fourier_matrix(d: int) -> np.ndarray:
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def F(d: int, p: int) -> LocalOperator:
    return LocalOperator((p,), d, "dense", fourier_matrix(d), label="F")


def H(p: int) -> LocalOperator:
    return LocalOperator((p,), 2, "dense", fourier_matrix(2), label="H")


def CZ(d: int, c: int, t: int, power: int = 1) -> LocalOperator:
    w = omega(d)
    diag = [w ** ((power * j * k) % d) for j in range(d) for k in range(d)]
    return LocalOperator((c, t), d, "diagonal", diag, label="CZ")


def dense_op(d: int, support, matrix, label: str = "U") -> LocalOperator:
    return LocalOperator(tuple(support), d, "dense", matrix, label=label)


def pauli_matrix(d: int, x: int, z: int) -> np.ndarray:
    """Matrix of X^x Z^z."""
    xm = np.roll(np.eye(d), x % d, axis=0)
    zm = np.diag(omega(d) ** (np.arange(d) * (z % d) % d))
    return xm @ zm


def apply(op: LocalOperator, s: SparseState) -> SparseState:
    if op.d != s.d:
        raise StateError(f"operator dimension {op.d} does not match state dimension {s.d}")
    cols = [s.position(p) for p in op.support]
    k = len(cols)
    d = s.d
    if s.n_terms == 0:
        return s
    if op.kind == "shift":
        keys = s.keys.copy()
        keys[:, cols] = (keys[:, cols] + op.data) % d
        return SparseState(d, s.partons, keys, s.amps)
    weights = d ** np.arange(k - 1, -1, -1, dtype=np.int64)
    local = s.keys[:, cols] @ weights
    if op.kind == "diagonal":
        return SparseState(d, s.partons, s.keys, s.amps * op.data[local])._compact()
    m = op.data
    out_rows = []
    out_amps = []
    for out in range(d**k):
        coeff = m[out, local] * s.amps
        nz = np.abs(coeff) > _ZERO
        if not nz.any():
            continue
        keys = s.keys[nz].copy()
        keys[:, cols] = np.array(_digits(out, d, k), dtype=np.int64)
        out_rows.append(keys)
        out_amps.append(coeff[nz])
    if not out_rows:
        return SparseState(d, s.partons, np.zeros((0, len(s.partons)), np.int64), np.zeros(0, complex))
    return SparseState(d, s.partons, np.vstack(out_rows), np.concatenate(out_amps))._compact()


def apply_pauli(s: SparseState, p: int, x: int = 0, z: int = 0) -> SparseState:
    """Apply X^x Z^z on parton p."""
    if z % s.d:
        s = apply(Z(s.d, p, z), s)
    if x % s.d:
        s = apply(X(s.d, p, x), s)
    return s


# ---------------------------------------------------------------------------
# bases and measurement


@dataclass(frozen=True, eq=False)
class Basis:
    """A complete measurement: Kraus maps indexed by outcome digit tuples."""

    label: str
    d: int
    k_in: int
    k_out: int
    kraus: np.ndarray
    outcomes: tuple[tuple[int, ...], ...]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kr = np.asarray(self.kraus, dtype=complex)
        want = (len(self.outcomes), self.d**self.k_out, self.d**self.k_in)
        if kr.shape != want:
            raise BasisError(f"basis {self.label}: Kraus array shape {kr.shape}, expected {want}")
        object.__setattr__(self, "kraus", kr)

    def completeness_error(self) -> float:
        total = np.einsum("oab,oac->bc", self.kraus.conj(), self.kraus)
        return float(np.max(np.abs(total - np.eye(self.d**self.k_in))))

    def check(self, tol: float = 1e-12) -> Basis:
        err = self.completeness_error()
        if err > tol:
            raise BasisError(f"basis {self.label} is not complete (deviation {err:.2e})")
        return self

    def outcome_index(self, outcome) -> int:
        outcome = tuple(int(x) for x in np.atleast_1d(outcome))
        try:
            return self.outcomes.index(outcome)
        except ValueError:
            raise OutcomeError(f"{outcome} is not an outcome of basis {self.label}") from None


def basis_from_vectors(label: str, d: int, k: int, vectors: dict, params=None) -> Basis:
    """Rank-one basis from outcome -> vector (the projector is <v|)."""
    outcomes = tuple(vectors)
    kraus = np.array([np.asarray(vectors[o], dtype=complex).conj()[None, :] for o in outcomes])
    return Basis(label, d, k, 0, kraus, outcomes, dict(params or {})).check()


def _ket(d: int, *digits) -> np.ndarray:
    v = np.zeros(d ** len(digits), dtype=complex)
    v[_index(digits, d)] = 1
    return v


def _ghz_vec(d: int, k: int) -> np.ndarray:
    v = np.zeros(d**k, dtype=complex)
    for j in range(d):
        v[_index((j,) * k, d)] = 1 / np.sqrt(d)
    return v


def _kron(*ms):
    out = np.eye(1, dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def x_tilde_basis(d: int) -> Basis:
    """Outcome m is the vector Z^m |+>."""
    plus = np.ones(d, dtype=complex) / np.sqrt(d)
    return basis_from_vectors("x_tilde", d, 1, {(m,): pauli_matrix(d, 0, m) @ plus for m in range(d)})


def computational_basis(d: int) -> Basis:
    return basis_from_vectors("computational", d, 1, {(j,): _ket(d, j) for j in range(d)})


def bell_basis(d: int) -> Basis:
    """Outcome (a, b) is (Z^a X^b (x) 1) sum_j |jj> / sqrt(d)."""
    b0 = _ghz_vec(d, 2)
    I = np.eye(d)
    vecs = {(a, b): _kron(pauli_matrix(d, 0, a) @ pauli_matrix(d, b, 0), I) @ b0 for a in range(d) for b in range(d)}
    return basis_from_vectors("bell", d, 2, vecs)


def twisted_n_basis(U: np.ndarray) -> Basis:
    """Outcome (r, s) is (U^dag X^r Z^s (x) 1) sum_j |jj> / sqrt(d)."""
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    if U.shape != (d, d) or not np.allclose(U.conj().T @ U, np.eye(d), atol=1e-12):
        raise BasisError("twisted basis needs a unitary matrix")
    b0 = _ghz_vec(d, 2)
    vecs = {(r, s): _kron(U.conj().T @ pauli_matrix(d, r, s), np.eye(d)) @ b0 for r in range(d) for s in range(d)}
    return basis_from_vectors("twisted_N", d, 2, vecs, {"U": U})


def twisted_o_basis(d: int) -> Basis:
    """Outcome (r, s, t) is (1 (x) F^dag (x) 1)(X^r (x) Z^s (x) X^t) GHZ_3."""
    g = _ghz_vec(d, 3)
    I = np.eye(d)
    Fd = fourier_matrix(d).conj().T
    vecs = {}
    for r, s, t in itertools.product(range(d), repeat=3):
        vecs[(r, s, t)] = _kron(I, Fd, I) @ _kron(pauli_matrix(d, r, 0), pauli_matrix(d, 0, s), pauli_matrix(d, t, 0)) @ g
    return basis_from_vectors("twisted_O", d, 3, vecs)


def twisted_w_basis(d: int) -> Basis:
    """Outcome (u, v, w) is (X^u (x) Z^v (x) X^w) GHZ_3."""
    g = _ghz_vec(d, 3)
    vecs = {}
    for u, v, w in itertools.product(range(d), repeat=3):
        vecs[(u, v, w)] = _kron(pauli_matrix(d, u, 0), pauli_matrix(d, 0, v), pauli_matrix(d, w, 0)) @ g
    return basis_from_vectors("twisted_W", d, 3, vecs)


def logical_projection(d: int, k: int) -> Basis:
    """Maps k partons to one qudit: sum_j |j><j...j| X_1^{m_1} ... X_{k-1}^{m_{k-1}}."""
    if k < 1:
        raise BasisError("logical projection needs at least one parton")
    outcomes = tuple(itertools.product(range(d), repeat=k - 1))
    proj = np.zeros((d, d**k), dtype=complex)
    for j in range(d):
        proj[j, _index((j,) * k, d)] = 1
    kraus = []
    for m in outcomes:
        xs = [pauli_matrix(d, mi, 0) for mi in m] + [np.eye(d)]
        kraus.append(proj @ _kron(*xs))
    return Basis("logical_projection", d, k, 1, np.array(kraus), outcomes).check()


# -- policies -----------------------------------------------------------------


@dataclass
class Exhaustive:
    name: str = "exhaustive"


@dataclass
class Sampled:
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)
    name: str = "sampled"

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)


@dataclass
class Forced:
    outcomes: list = field(default_factory=list)
    name: str = "forced"

    def next(self):
        if not self.outcomes:
            raise OutcomeError("forced policy ran out of outcomes")
        return self.outcomes.pop(0)


def parse_policy(text: str):
    text = text.strip().lower()
    if text == "exhaustive":
        return Exhaustive()
    if text.startswith("seed:"):
        return Sampled(int(text.split(":", 1)[1]))
    raise StateError(f"unknown policy {text!r}; use exhaustive or seed:N")


@dataclass(frozen=True)
class MeasurementRecord:
    targets: tuple[int, ...]
    basis: str
    outcome: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "outcome", tuple(int(o) for o in self.outcome))

    def to_json(self) -> dict:
        return {"targets": list(self.targets), "basis": self.basis, "outcome": list(self.outcome)}


def kraus_branch(s: SparseState, targets, basis: Basis, oi: int, new_ids=()) -> tuple[SparseState, float]:
    """Unnormalised image of ``s`` under Kraus map ``oi`` and its weight."""
    cols = [s.position(p) for p in targets]
    rest = [i for i in range(len(s.partons)) if i not in cols]
    d = s.d
    k = len(cols)
    new_ids = tuple(new_ids)
    if len(new_ids) != basis.k_out:
        raise StateError(f"basis {basis.label} needs {basis.k_out} output ids, got {len(new_ids)}")
    out_partons = tuple(s.partons[i] for i in rest) + new_ids
    weights = d ** np.arange(k - 1, -1, -1, dtype=np.int64)
    local = s.keys[:, cols] @ weights
    m = basis.kraus[oi]
    rows = []
    amps = []
    for out in range(m.shape[0]):
        coeff = m[out, local] * s.amps
        nz = np.abs(coeff) > _ZERO
        if not nz.any():
            continue
        keys = s.keys[nz][:, rest]
        if basis.k_out:
            tail = np.tile(np.array(_digits(out, d, basis.k_out), dtype=np.int64), (int(nz.sum()), 1))
            keys = np.hstack([keys, tail])
        rows.append(keys)
        amps.append(coeff[nz])
    if not rows:
        empty = SparseState(d, out_partons, np.zeros((0, len(out_partons)), np.int64), np.zeros(0, complex))
        return empty, 0.0
    st = SparseState(d, out_partons, np.vstack(rows), np.concatenate(amps))._compact()
    return st, float(np.sum(np.abs(st.amps) ** 2))


def measure(s: SparseState, targets, basis: Basis, policy=None, new_ids=()):
    """Measure ``targets``; returns a list of (record, post-state, probability)."""
    targets = tuple(targets)
    if len(set(targets)) != len(targets):
        raise StateError("measurement targets must be distinct")
    if len(targets) != basis.k_in:
        raise BasisError(f"basis {basis.label} acts on {basis.k_in} partons, got {len(targets)}")
    if basis.d != s.d:
        raise BasisError("basis dimension does not match the state")
    policy = policy or Exhaustive()
    if isinstance(policy, Forced):
        want = policy.next()
        oi = basis.outcome_index(want)
        st, p = kraus_branch(s, targets, basis, oi, new_ids)
        if p < PRUNE:
            raise OutcomeError(f"forced outcome {want} of {basis.label} on {targets} has zero probability")
        return [(MeasurementRecord(targets, basis.label, basis.outcomes[oi]), st.normalized(), p)]
    branches = []
    for oi, outcome in enumerate(basis.outcomes):
        st, p = kraus_branch(s, targets, basis, oi, new_ids)
        if p >= PRUNE:
            branches.append((MeasurementRecord(targets, basis.label, outcome), st, p))
    if isinstance(policy, Sampled):
        probs = np.array([b[2] for b in branches])
        pick = int(policy.rng.choice(len(branches), p=probs / probs.sum()))
        rec, st, p = branches[pick]
        return [(rec, st.normalized(), p)]
    return [(rec, st.normalized(), p) for rec, st, p in branches]


def reduced_density(s: SparseState, keep) -> np.ndarray:
    """Reduced density matrix on ``keep`` (dense, small supports only)."""
    keep = tuple(keep)
    cols = [s.position(p) for p in keep]
    rest = [i for i in range(len(s.partons)) if i not in cols]
    d = s.d
    dim = d ** len(keep)
    weights = d ** np.arange(len(keep) - 1, -1, -1, dtype=np.int64)
    local = s.keys[:, cols] @ weights
    groups: dict[tuple, list[tuple[int, complex]]] = {}
    for row, li, a in zip(s.keys[:, rest], local, s.amps):
        groups.setdefault(tuple(int(x) for x in row), []).append((int(li), complex(a)))
    rho = np.zeros((dim, dim), dtype=complex)
    for terms in groups.values():
        v = np.zeros(dim, dtype=complex)
        for li, a in terms:
            v[li] += a
        rho += np.outer(v, v.conj())
    return rho


# ---------------------------------------------------------------------------
# product states


@dataclass(eq=False)
class ProductState:
    """Tensor product of independent :class:`SparseState` components."""

    d: int
    components: list[SparseState]

    def __post_init__(self):
        seen = set()
        for c in self.components:
            if c.d != self.d:
                raise StateError("component dimension mismatch")
            if seen & set(c.partons):
                raise StateError("components share partons")
            seen |= set(c.partons)

    @property
    def partons(self) -> list[int]:
        return sorted(p for c in self.components for p in c.partons)

    def copy(self) -> ProductState:
        return ProductState(self.d, list(self.components))

    def component_index(self, p: int) -> int:
        for i, c in enumerate(self.components):
            if p in c.partons:
                return i
        raise StateError(f"parton {p} is not part of the state")

    def component(self, p: int) -> SparseState:
        return self.components[self.component_index(p)]

    def gathered(self, partons, max_amps: int = DEFAULT_MAX_AMPS) -> tuple[ProductState, int]:
        """Merge the components holding ``partons``; returns (state, index)."""
        idx = sorted({self.component_index(p) for p in partons})
        if len(idx) == 1:
            return self, idx[0]
        merged = self.components[idx[0]]
        for i in idx[1:]:
            merged = merged.tensor(self.components[i], max_amps)
        comps = [c for i, c in enumerate(self.components) if i not in idx]
        comps.append(merged)
        return ProductState(self.d, comps), len(comps) - 1

    def replace_component(self, i: int, st: SparseState) -> ProductState:
        comps = list(self.components)
        if st.partons:
            comps[i] = st
        else:
            comps.pop(i)
        return ProductState(self.d, comps)

    def apply(self, op: LocalOperator) -> ProductState:
        st, i = self.gathered(op.support)
        return st.replace_component(i, apply(op, st.components[i]))

    def apply_pauli(self, p: int, x: int = 0, z: int = 0) -> ProductState:
        i = self.component_index(p)
        return self.replace_component(i, apply_pauli(self.components[i], p, x, z))

    def measure(self, targets, basis: Basis, policy=None, new_ids=()):
        st, i = self.gathered(targets)
        out = []
        for rec, post, p in measure(st.components[i], targets, basis, policy, new_ids):
            out.append((rec, st.replace_component(i, post), p))
        return out

    def to_sparse(self, max_amps: int = DEFAULT_MAX_AMPS) -> SparseState:
        out = SparseState.empty(self.d)
        for c in self.components:
            out = out.tensor(c, max_amps)
        return out

    def restricted(self, partons) -> SparseState:
        """The joint state of the components touching ``partons``."""
        st, i = self.gathered(partons)
        return st.components[i]


# ---------------------------------------------------------------------------
# Pauli frames


@dataclass
class PauliFrame:
    d: int
    entries: dict[int, tuple[int, int]] = field(default_factory=dict)

    def get(self, q: int) -> tuple[int, int]:
        return self.entries.get(q, (0, 0))

    def add(self, q: int, x: int = 0, z: int = 0) -> None:
        ox, oz = self.get(q)
        nx, nz = (ox + x) % self.d, (oz + z) % self.d
        if nx or nz:
            self.entries[q] = (nx, nz)
        else:
            self.entries.pop(q, None)

    def pop(self, q: int) -> tuple[int, int]:
        return self.entries.pop(q, (0, 0))

    def set(self, q: int, x: int, z: int) -> None:
        self.entries.pop(q, None)
        self.add(q, x, z)

    def copy(self) -> PauliFrame:
        return PauliFrame(self.d, dict(self.entries))

    def restricted(self, qudits) -> PauliFrame:
        qs = set(qudits)
        return PauliFrame(self.d, {q: v for q, v in self.entries.items() if q in qs})

    def is_identity(self) -> bool:
        return not self.entries

    def apply_to(self, s: SparseState) -> SparseState:
        """X^x Z^z on every entry: maps an ideal state to the raw one."""
        for q, (x, z) in sorted(self.entries.items()):
            if q in s.partons:
                s = apply_pauli(s, q, x, z)
        return s

    def correct(self, s: SparseState) -> SparseState:
        """Undo the frame: Z^-z X^-x on every entry."""
        for q, (x, z) in sorted(self.entries.items()):
            if q in s.partons:
                if x % self.d:
                    s = apply(X(self.d, q, -x), s)
                if z % self.d:
                    s = apply(Z(self.d, q, -z), s)
        return s

    def to_json(self) -> dict:
        return {str(q): {"x": x, "z": z} for q, (x, z) in sorted(self.entries.items())}


def frame_compose(f: PauliFrame, g: PauliFrame) -> PauliFrame:
    """Componentwise sum; phases from reordering X and Z are dropped."""
    if f.d != g.d:
        raise StateError("cannot compose frames of different dimension")
    out = f.copy()
    for q, (x, z) in g.entries.items():
        out.add(q, x, z)
    return out
