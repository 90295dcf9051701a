from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spt_mbqc.groups import CapacityError
from spt_mbqc.lattice import builtin
from spt_mbqc.mbqc import (
    BondGraph,
    Branch,
    Clusters,
    FaceResource,
    Gate,
    MeasurementPlan,
    PlanError,
    ResourceError,
    Step,
    bond_fidelities,
    bonds_to_cluster,
    check_reduction_plan,
    checkerboard_plan,
    circuit_reference,
    cluster_reference,
    merge_plaquettes,
    parse_circuit,
    reduce_exhaustive_by_group,
    reduce_to_bonds,
    run_circuit,
    stabilizer_values,
    teleport_cz,
    teleport_single,
    verify_cluster,
)
from spt_mbqc.qstate import (
    Exhaustive,
    Forced,
    PauliFrame,
    ProductState,
    Sampled,
    SparseState,
    fidelity,
    overlap,
)


def w(d):
    return np.exp(2j * np.pi / d)


def xz(d, x, z):
    """Dense X^x Z^z."""
    X = np.roll(np.eye(d), 1, axis=0)
    Z = np.diag(w(d) ** np.arange(d))
    return np.linalg.matrix_power(X, x % d) @ np.linalg.matrix_power(Z, z % d)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_vec(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def ghz_dense(d, k):
    v = np.zeros(d**k, dtype=complex)
    for j in range(d):
        v[sum(j * d**i for i in range(k))] = 1 / np.sqrt(d)
    return v


def same_ray(a: SparseState, b: SparseState, tol=1e-10):
    return abs(abs(overlap(a.normalized(), b.normalized())) - 1) < tol


# -- plans --------------------------------------------------------------------------


def test_plan_json_roundtrip(tmp_path):
    plan = MeasurementPlan([Step("x_tilde", (3,)), Step("bell", (1, 7))], "demo")
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan.to_json()))
    again = MeasurementPlan.load(path)
    assert again.steps == plan.steps and again.name == "demo"
    with pytest.raises(PlanError):
        MeasurementPlan.from_json({"steps": [], "extra": 1})
    with pytest.raises(PlanError):
        MeasurementPlan.from_json([{"kind": "x_tilde", "targets": [1]}, {"kind": "bell", "targets": [1, 2]}])
    with pytest.raises(PlanError):
        Step("y_basis", (0,))
    with pytest.raises(PlanError):
        Step("bell", (2, 2))


def test_face_left_with_three_partons_is_rejected():
    lat, _ = builtin("square", 1, 1)
    plan = MeasurementPlan([Step("x_tilde", (lat.faces[0].cycle[0],))])
    with pytest.raises(PlanError):
        check_reduction_plan(lat, plan)


# -- reduction to bonds ----------------------------------------------------------------


def test_single_face_qutrit_oracle():
    """Measuring one parton of a 3-GHZ leaves Z^-m (x) 1 on the bond."""
    d = 3
    ghz = ghz_dense(d, 3)
    ket_b = ghz_dense(d, 2)
    lat_state = SparseState.ghz(d, (0, 1, 2))
    for m in range(d):
        [b] = reduce_to_bonds(
            ProductState(d, [lat_state]), _one_face(d), MeasurementPlan([Step("x_tilde", (0,))]), Forced([(m,)])
        )[0]
        # dense projection of parton 0 onto Z^m|+>
        bra = (xz(d, 0, m) @ (np.ones(d) / np.sqrt(d))).conj()
        post = np.einsum("a,abc->bc", bra, ghz.reshape(d, d, d)).reshape(-1)
        post /= np.linalg.norm(post)
        assert np.allclose(post, np.kron(xz(d, 0, -m), np.eye(d)) @ ket_b, atol=1e-12)
        raw = b.state.restricted((1, 2)).permuted((1, 2)).to_dense()
        assert abs(np.vdot(post, raw)) == pytest.approx(1, abs=1e-12)
        assert bond_fidelities(b, [(1, 2)]) == [pytest.approx(1, abs=1e-12)]


def _one_face(d):
    from spt_mbqc.lattice import Face, Lattice, Site

    return Lattice(
        sites=(Site(0, (0,)), Site(1, (1,)), Site(2, (2,))),
        faces=(Face(0, (0, 1, 2)),),
        periodic=False,
        boundary=(0,),
    )


def test_checkerboard_square_torus_exhaustive():
    lat, _ = builtin("square", 2, 2)
    plan = checkerboard_plan(lat)
    branches, bonds = reduce_to_bonds(None, lat, plan, Exhaustive(), frame=PauliFrame(2))
    assert len(bonds) == 4
    assert len(branches) == 2**8
    assert sum(b.prob for b in branches) == pytest.approx(1)
    for b in branches:
        assert min(bond_fidelities(b, bonds)) > 1 - 1e-10


@pytest.mark.parametrize("d", [2, 3])
def test_frame_bookkeeping_matches_brute_force(d):
    lat, _ = builtin("square", 2, 2)
    plan = checkerboard_plan(lat)
    for seed in range(10):
        [b], bonds = reduce_to_bonds(None, lat, plan, Sampled(seed), frame=PauliFrame(d))
        for p, q in bonds:
            ideal = SparseState.ghz(d, (p, q))
            tracked = b.frame.restricted((p, q)).apply_to(ideal)
            assert same_ray(tracked, b.state.restricted((p, q)))


def test_reduction_by_group_on_kagome():
    from spt_mbqc.routing import builtin_plan, compile_plan

    lat, rplan = builtin_plan("kagome", 2, 2)
    mplan = compile_plan(rplan, lat, 2)
    total = 0
    for faces, bonds, branches in reduce_exhaustive_by_group(lat, 2, mplan):
        for b in branches:
            assert min(bond_fidelities(b, bonds)) > 1 - 1e-10
        total += len(bonds)
    assert total == len(rplan.bonds())


# -- merging ------------------------------------------------------------------------------


def _two_faces(d):
    from spt_mbqc.lattice import Face, Lattice, Site

    sites = [Site(0, (0, 4))] + [Site(i, (i,)) for i in (1, 2, 3)] + [Site(i, (i,)) for i in (5, 6, 7)]
    lat = Lattice(tuple(sites), (Face(0, (0, 1, 2, 3)), Face(1, (4, 5, 6, 7))), periodic=False, boundary=(0, 1))
    state = ProductState(d, [SparseState.ghz(d, (0, 1, 2, 3)), SparseState.ghz(d, (4, 5, 6, 7))])
    return lat, state


def test_merge_outcome_zero_is_exact_ghz():
    lat, state = _two_faces(2)
    [b] = merge_plaquettes(state, lat, 0, 4, Forced([(0, 0)]))
    assert b.frame.is_identity()
    raw = b.state.restricted((1, 2, 3, 5, 6, 7))
    assert fidelity(raw, SparseState.ghz(2, (1, 2, 3, 5, 6, 7))) == pytest.approx(1)


@pytest.mark.parametrize("d", [2, 3])
def test_merge_every_outcome_matches_dense_oracle(d):
    lat, state = _two_faces(d)
    branches = merge_plaquettes(state, lat, 0, 4, Exhaustive())
    assert len(branches) == d * d
    g4 = ghz_dense(d, 4).reshape((d,) * 4)
    joint = np.einsum("abcd,efgh->aebcdfgh", g4, g4).reshape(d * d, -1)
    survivors = (1, 2, 3, 5, 6, 7)
    target = SparseState.ghz(d, survivors)
    for b in branches:
        a, bb = b.records[-1].outcome
        vec = np.kron(xz(d, 0, a) @ xz(d, bb, 0), np.eye(d)) @ ghz_dense(d, 2)
        post = vec.conj() @ joint
        dense = SparseState.from_dense(d, survivors, post / np.linalg.norm(post))
        assert same_ray(dense, b.state.restricted(survivors))
        assert same_ray(b.frame.correct(dense), target)


def test_merge_same_face_rejected():
    lat, state = _two_faces(2)
    with pytest.raises(PlanError):
        merge_plaquettes(state, lat, 0, 1)
    with pytest.raises(PlanError):
        merge_plaquettes(state, lat, 1, 5)


# -- cluster conversion -----------------------------------------------------------------


def ring(n_sites, arity=2):
    """Ring of logical sites; site s owns partons arity*s .. arity*s+arity-1."""
    sites = {s: tuple(range(arity * s, arity * s + arity)) for s in range(n_sites)}
    bonds = tuple((arity * s + 1, (arity * (s + 1)) % (arity * n_sites)) for s in range(n_sites))
    return BondGraph(sites, bonds)


def ideal_branch(graph, d, frame=None):
    state = graph.ideal_state(d)
    frame = frame or PauliFrame(d)
    comps = [frame.restricted(c.partons).apply_to(c) for c in state.components]
    return Branch(ProductState(d, comps), frame, Clusters())


def test_four_cycle_cluster_exhaustive():
    regs = bonds_to_cluster(ideal_branch(ring(4), 2), ring(4), Exhaustive())
    assert len(regs) == 16
    for reg in regs:
        rep = verify_cluster(reg)
        assert rep.passed and all(v == pytest.approx(1) for v in rep.stabilizers.values())
    zero = [r for r in regs if all(o == (0,) for o in r.branch.outcomes())]
    assert len(zero) == 1 and zero[0].frame.is_identity()


def test_single_outcome_gives_z_on_far_end():
    g = ring(4)
    [reg] = bonds_to_cluster(ideal_branch(g, 2), g, Forced([(1,), (0,), (0,), (0,)]))
    # site 0 pair (0, 1): parton 0 is bonded to site 3
    assert reg.frame.entries == {reg.qudit_of[3]: (0, 1)}
    rep = verify_cluster(reg, corrected=False)
    assert not rep.passed
    # a Z on qudit a anticommutes only with K_a
    assert rep.violated == [reg.qudit_of[3]]
    assert rep.stabilizers[reg.qudit_of[3]] == pytest.approx(-1)


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 3))
def test_cluster_with_incoming_frames(seed, d):
    rng = np.random.default_rng(seed)
    g = ring(3)
    frame = PauliFrame(d)
    for p in g.owner:
        frame.add(p, int(rng.integers(d)), int(rng.integers(d)))
    for reg in bonds_to_cluster(ideal_branch(g, d, frame), g, Sampled(seed)):
        assert verify_cluster(reg).overlap == pytest.approx(1, abs=1e-10)


def test_qutrit_chain_all_outcomes():
    # two logical qutrits joined by three bonds: nine outcomes per site
    g = BondGraph({0: (0, 1, 2), 1: (3, 4, 5)}, ((0, 3), (1, 4), (2, 5)))
    regs = bonds_to_cluster(ideal_branch(g, 3), g, Exhaustive())
    assert len(regs) == 81
    for reg in regs:
        assert verify_cluster(reg).overlap == pytest.approx(1, abs=1e-10)
    chain = BondGraph({0: (0,), 1: (1, 2), 2: (3,)}, ((0, 1), (2, 3)))
    for reg in bonds_to_cluster(ideal_branch(chain, 3), chain, Exhaustive()):
        assert verify_cluster(reg).overlap == pytest.approx(1, abs=1e-10)


def test_cluster_reference_dense():
    d = 3
    st_ = cluster_reference(d, (0, 1, 2), [(0, 1), (1, 2)])
    plus = np.ones(d) / np.sqrt(d)
    vec = np.kron(np.kron(plus, plus), plus).astype(complex)
    for a, b, c in itertools.product(range(d), repeat=3):
        vec[(a * d + b) * d + c] *= w(d) ** (a * b + b * c)
    assert np.allclose(st_.to_dense(), vec)
    vals = stabilizer_values(cluster_reference(2, (0, 1, 2, 3), [(0, 1), (1, 2), (2, 3), (3, 0)]), [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert all(v == pytest.approx(1) for v in vals.values())


def test_bond_graph_rejections():
    with pytest.raises(PlanError):
        BondGraph({0: (0, 1), 1: (2,)}, ((0, 2), (1, 2)))
    with pytest.raises(PlanError):
        BondGraph({0: (0, 1)}, ((0, 1),))
    with pytest.raises(PlanError):
        BondGraph({0: (0, 1), 1: (2,)}, ((0, 2),))


# -- teleportation --------------------------------------------------------------------------


def teleport_oracle(U, eta, r, s):
    """Dense projection of (eta (x) B) onto N(r, s) on qudits (1, 2)."""
    d = U.shape[0]
    full = np.kron(eta, ghz_dense(d, 2))
    n = np.kron(U.conj().T @ xz(d, r, s), np.eye(d)) @ ghz_dense(d, 2)
    out = n.conj() @ full.reshape(d * d, d)
    return out / np.linalg.norm(out)


def test_teleport_hadamard_zero_outcome():
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    [(out, frame, rec, p)] = teleport_single(H, [1, 0], Forced([(0, 0)]))
    assert frame.is_identity()
    assert abs(np.vdot(out.to_dense(), np.array([1, 1]) / np.sqrt(2))) == pytest.approx(1)


@pytest.mark.parametrize("d", [2, 3])
def test_teleport_frames_match_oracle(d):
    rng = np.random.default_rng(d)
    for U in (np.eye(d), random_unitary(rng, d)):
        eta = random_vec(rng, d)
        branches = teleport_single(U, eta)
        assert len(branches) == d * d
        assert sum(b[3] for b in branches) == pytest.approx(1)
        for out, frame, rec, p in branches:
            r, s = rec.outcome
            raw = teleport_oracle(U, eta, r, s)
            assert abs(np.vdot(raw, out.to_dense())) == pytest.approx(1, abs=1e-10)
            fixed = frame.correct(out).to_dense()
            assert abs(np.vdot(U @ eta, fixed)) == pytest.approx(1, abs=1e-10)
            if np.allclose(U, np.eye(d)):
                assert frame.get(3) == ((-r) % d, (-s) % d)


def test_teleport_rejects_non_unitary():
    with pytest.raises(PlanError):
        teleport_single(np.array([[1, 1], [0, 1]]), [1, 0])


def test_teleport_with_incoming_frame():
    rng = np.random.default_rng(5)
    d = 3
    U, eta = random_unitary(rng, d), random_vec(rng, d)
    raw_in = xz(d, 2, 1) @ eta
    for out, frame, rec, p in teleport_single(U, raw_in, in_frame=(2, 1)):
        assert abs(np.vdot(U @ eta, frame.correct(out).to_dense())) == pytest.approx(1, abs=1e-10)


def cz_dense(d):
    return np.diag([w(d) ** (j * k) for j in range(d) for k in range(d)])


def test_teleport_cz_plus_plus():
    chi = np.full(4, 0.5)
    [(out, frame, recs, p)] = teleport_cz(chi, 2, Forced([(0, 0, 0), (0, 0, 0)]))
    assert frame.is_identity()
    want = np.array([1, 1, 1, -1]) / 2
    assert abs(np.vdot(want, out.permuted((4, 8)).to_dense())) == pytest.approx(1)


@pytest.mark.parametrize("d,count", [(2, 64), (3, 729)])
def test_teleport_cz_exhaustive(d, count):
    rng = np.random.default_rng(d)
    chi = random_vec(rng, d * d)
    branches = teleport_cz(chi, d)
    assert len(branches) == count
    want = cz_dense(d) @ chi
    for out, frame, recs, p in branches:
        fixed = frame.correct(out).permuted((4, 8)).to_dense()
        assert abs(np.vdot(want, fixed)) == pytest.approx(1, abs=1e-10)


def test_teleport_cz_computational_inputs():
    d = 3
    for j, k in itertools.product(range(d), repeat=2):
        chi = np.zeros(d * d)
        chi[j * d + k] = 1
        for out, frame, recs, p in teleport_cz(chi, d, Sampled(j * d + k)):
            fixed = frame.correct(out).permuted((4, 8)).to_dense()
            assert abs(fixed[j * d + k]) == pytest.approx(1, abs=1e-10)


# -- circuits ---------------------------------------------------------------------------------


def kagome_faces(d, copies=1):
    lat, _ = builtin("kagome", copies, 1)
    return FaceResource.from_lattice(lat, d)


def test_circuit_parsing():
    c = parse_circuit([{"gate": "h", "targets": [0]}, {"gate": [[0, 1], [1, 0]], "targets": [1]}, {"gate": "CZ", "targets": [0, 1]}])
    assert [g.name for g in c] == ["H", "U", "CZ"]
    with pytest.raises(PlanError):
        parse_circuit([{"gate": "CZ", "targets": [0]}])
    with pytest.raises(PlanError):
        parse_circuit([{"gate": "H", "targets": [0], "when": 1}])
    with pytest.raises(PlanError):
        Gate("H", (0,)).unitary(3)


def test_hadamard_circuit():
    results = run_circuit([Gate("H", (0,))], kagome_faces(2))
    plus = np.array([1, 1]) / np.sqrt(2)
    for r in results:
        assert r.fidelity_with(plus) == pytest.approx(1, abs=1e-9)


def test_empty_circuit_is_identity():
    for r in run_circuit([], kagome_faces(3), n=1):
        assert r.fidelity_with(np.array([1, 0, 0])) == pytest.approx(1, abs=1e-9)


def test_two_qubit_cluster_circuit():
    circ = [Gate("H", (0,)), Gate("H", (1,)), Gate("CZ", (0, 1))]
    ref = circuit_reference(circ, 2)
    results = run_circuit(circ, kagome_faces(2, 3), Sampled(0))
    for r in results:
        assert r.fidelity_with(ref) == pytest.approx(1, abs=1e-9)


@given(seed=st.integers(0, 2**16))
def test_reduction_order_does_not_matter(seed):
    circ = [Gate("F", (0,)), Gate("Z", (0,))]
    ref = circuit_reference(circ, 3)
    states = []
    for order in ("before", "after", "shuffle"):
        [r] = run_circuit(circ, kagome_faces(3), Sampled(seed), order=order, seed=seed)
        assert r.fidelity_with(ref) == pytest.approx(1, abs=1e-9)
        states.append(r.corrected_state())
    for s in states[1:]:
        assert abs(overlap(states[0], s)) == pytest.approx(1, abs=1e-10)


def test_resource_exhaustion_and_branch_cap():
    with pytest.raises(ResourceError):
        run_circuit([Gate("H", (0,))] * 5, kagome_faces(2))
    with pytest.raises(CapacityError):
        run_circuit([Gate("H", (0,)), Gate("H", (0,))], kagome_faces(2), max_branches=4)
