"""Command line entry point: verification commands and pipeline runs.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or input error,
3 capacity bound exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import cohomology as coh
from . import mbqc, qstate, routing, symmetry
from .groups import CapacityError, FiniteGroup, GroupError
from .lattice import LatticeError, derive_branching, resolve_lattice

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3
SEED_ENV = "SPT_MBQC_SEED"


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    target: str | None = None
    lattice: str | None = None
    group: str | None = None
    c: str = "1"
    gbar: int = 1
    d: int | None = None
    seed: int = 0
    policy: str | None = None
    max_amps: int = qstate.DEFAULT_MAX_AMPS
    report: str | None = None
    fmt: str = "text"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_amps <= 0:
            raise UsageError("--max-amps must be positive")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# helpers


def _group(cfg: RunConfig) -> FiniteGroup:
    text = cfg.group or (f"Z{cfg.d}" if cfg.d else "Z2")
    grp = FiniteGroup.parse(text)
    if cfg.d is not None and cfg.d != grp.order:
        raise UsageError(f"--d {cfg.d} differs from the order {grp.order} of {text}")
    return grp


def _cocycle(cfg: RunConfig, grp: FiniteGroup) -> coh.Cocycle3:
    try:
        cs = tuple(int(x) for x in str(cfg.c).split(","))
    except ValueError:
        raise UsageError(f"--c must be an integer or comma separated integers, got {cfg.c!r}") from None
    w = coh.standard_cocycle(grp, cs[0] if len(cs) == 1 else cs)
    return w


def _lattice(cfg: RunConfig, default: str):
    lat, br = resolve_lattice(cfg.lattice or default)
    return lat, br


def _policy(cfg: RunConfig, n_partons: int):
    text = cfg.policy or ("exhaustive" if n_partons <= 12 else f"seed:{cfg.seed}")
    return qstate.parse_policy(text), text


def _phase(e: coh.PhaseExponent) -> dict:
    v = e.value()
    return {**e.to_json(), "re": round(float(v.real), 12), "im": round(float(v.imag), 12)}


# ---------------------------------------------------------------------------
# commands


def cmd_verify_cocycle(cfg: RunConfig) -> tuple[bool, dict]:
    grp = _group(cfg)
    w = _cocycle(cfg, grp)
    rep = coh.check_cocycle_condition(w)
    out = {"command": "verify cocycle", "group": grp.spec.name, "c": cfg.c, "cocycle": rep.to_json()}
    if grp.spec.is_cyclic:
        out["class_invariant"] = _phase(coh.class_invariant(w))
    nu = coh.cocycle_to_cochain(w)
    out["homogeneous"] = coh.check_homogeneity(nu).passed
    return rep.passed and out["homogeneous"], out


def cmd_verify_symmetry(cfg: RunConfig) -> tuple[bool, dict]:
    grp = _group(cfg)
    nu = coh.cocycle_to_cochain(_cocycle(cfg, grp))
    lat, br = _lattice(cfg, "builtin:square:2x2")
    if lat.qudit_dim is not None and lat.qudit_dim != grp.order:
        raise UsageError(f"lattice qudit_dim {lat.qudit_dim} differs from group order {grp.order}")
    derived = False
    if br is None or cfg.extra.get("derive"):
        br = derive_branching(lat)
        derived = True
    if grp.order ** len(lat.faces) > cfg.max_amps:
        raise CapacityError(f"{grp.order}^{len(lat.faces)} plaquette amplitudes exceed --max-amps {cfg.max_amps}")
    lin = {}
    for label, (ia, ib) in sorted(br.sets.items()):
        k = len(ia) + len(ib)
        lin[label] = symmetry.verify_linear_rep(nu, ia, ib, k, cfg.gbar).to_json()
    glob = symmetry.verify_global_symmetry(nu, br, lat, cfg.gbar)
    ok = glob.passed and all(r["passed"] for r in lin.values())
    out = {
        "command": "verify symmetry",
        "lattice": lat.name,
        "group": grp.spec.name,
        "c": cfg.c,
        "gbar": cfg.gbar,
        "branching_derived": derived,
        "linear_rep": lin,
        "global": glob.to_json(),
    }
    return ok, out


def cmd_verify_boundary(cfg: RunConfig) -> tuple[bool, dict]:
    grp = _group(cfg)
    nu = coh.cocycle_to_cochain(_cocycle(cfg, grp))
    dirs = cfg.extra.get("directions")
    L = cfg.extra.get("length") or (len(dirs) if dirs else 4)
    if dirs:
        if set(dirs) - {"+", "-"} or len(dirs) != L:
            raise UsageError("--directions must be a string of + and - of the boundary length")
        bd = symmetry.Boundary(tuple(1 if ch == "+" else -1 for ch in dirs))
    else:
        bd = symmetry.Boundary.uniform(L)
    if grp.order**L > cfg.max_amps:
        raise CapacityError(f"{grp.order}^{L} boundary assignments exceed --max-amps {cfg.max_amps}")
    rep = symmetry.verify_boundary(nu, bd, cfg.gbar)
    return rep.passed, {
        "command": "verify boundary",
        "group": grp.spec.name,
        "c": cfg.c,
        "gbar": cfg.gbar,
        "directions": list(bd.directions),
        "report": rep.to_json(),
    }


def cmd_verify_czx(cfg: RunConfig) -> tuple[bool, dict]:
    lat, br = _lattice(cfg, "builtin:square:2x2")
    variant = cfg.extra.get("variant", "czx")
    if len(lat.parton_site) > 24:
        raise CapacityError(f"{len(lat.parton_site)} qubits are too many for the dense CZX check")
    out = {"command": "verify czx", "lattice": lat.name, "variant": variant}
    try:
        ops = symmetry.czx_operators(lat, variant, br)
    except symmetry.RepresentationError as err:
        out["error"] = str(err)
        return False, out
    out["square_deviation"] = ops.square_deviation()
    rep = symmetry.czx_hamiltonian_check(lat, variant, seed=cfg.seed, br=br)
    out["hamiltonian"] = rep.to_json()
    return rep.passed and out["square_deviation"] < 1e-12, out


def _reduction_plan(cfg: RunConfig, lat):
    pattern = cfg.extra.get("pattern") or "checkerboard"
    if pattern == "checkerboard":
        return mbqc.checkerboard_plan(lat, parity=1), pattern
    if pattern == "builtin":
        name = lat.name.rsplit("_", 1)[0]
        if name not in routing.BUILTIN_PLANS:
            raise UsageError(f"no builtin pattern for lattice {lat.name!r}")
        return routing.compile_plan(routing.BUILTIN_PLANS[name](lat), lat), pattern
    with open(pattern) as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "lines" in data:
        return routing.compile_plan(routing.RoutingPlan.from_json(data), lat), pattern
    return mbqc.MeasurementPlan.from_json(data), pattern


def cmd_reduce(cfg: RunConfig) -> tuple[bool, dict]:
    lat, _ = _lattice(cfg, "builtin:square:2x2")
    d = cfg.d or lat.qudit_dim or 2
    plan, pattern = _reduction_plan(cfg, lat)
    policy, ptext = _policy(cfg, len(lat.parton_site))
    out = {"command": "reduce", "lattice": lat.name, "d": d, "pattern": pattern, "policy": ptext}
    if isinstance(policy, qstate.Exhaustive):
        groups = mbqc.reduce_exhaustive_by_group(lat, d, plan)
        fids = [f for _, bonds, brs in groups for b in brs for f in mbqc.bond_fidelities(b, bonds)]
        bonds = sorted(b for _, bd, _ in groups for b in bd)
        out["groups"] = [
            {
                "faces": faces,
                "bonds": [list(b) for b in bd],
                "branches": len(brs),
                "probability": round(sum(b.prob for b in brs), 12),
            }
            for faces, bd, brs in groups
        ]
        out["branches"] = sum(len(brs) for _, _, brs in groups)
    else:
        branches, bonds = mbqc.reduce_to_bonds(qstate.product_plaquette_state(lat, d), lat, plan, policy)
        fids = [f for b in branches for f in mbqc.bond_fidelities(b, bonds)]
        out["branches"] = len(branches)
        out["transcript"] = branches[0].transcript()
        out["frame"] = branches[0].frame.to_json()
    out["bonds"] = [list(b) for b in bonds]
    out["min_bond_fidelity"] = round(min(fids), 12) if fids else None
    return bool(fids) and min(fids) > 1 - 1e-10, out


def _load_unitary(text: str, d: int) -> tuple[str, np.ndarray]:
    if os.path.exists(text):
        with open(text) as fh:
            return "U", mbqc._parse_matrix(json.load(fh))
    return text.upper(), mbqc.Gate(text.upper(), (0,)).unitary(d)


def cmd_teleport(cfg: RunConfig) -> tuple[bool, dict]:
    d = cfg.d or 2
    gate = cfg.extra.get("gate") or ("H" if d == 2 else "F")
    rng = np.random.default_rng(cfg.seed)
    policy, ptext = _policy(cfg, 8)
    out = {"command": "teleport", "gate": gate, "d": d, "policy": ptext, "seed": cfg.seed}
    if gate.upper() == "CZ":
        chi = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
        chi /= np.linalg.norm(chi)
        ref = qstate.SparseState.from_dense(d, (4, 8), mbqc.Gate("CZ", (0, 1)).unitary(d) @ chi)
        res = mbqc.teleport_cz(chi, d, policy)
        fids = [qstate.fidelity(fr.correct(st).permuted((4, 8)).normalized(), ref) for st, fr, _, _ in res]
        out["branches"] = len(res)
        out["outcomes"] = [[list(r.outcome) for r in recs] for _, _, recs, _ in res[:64]]
    else:
        name, U = _load_unitary(gate, d)
        if U.shape != (d, d):
            raise UsageError(f"gate {gate} is {U.shape[0]}-dimensional, expected d={d}")
        eta = rng.normal(size=d) + 1j * rng.normal(size=d)
        eta /= np.linalg.norm(eta)
        ref = qstate.SparseState.from_dense(d, (3,), U @ eta)
        res = mbqc.teleport_single(U, eta, policy)
        fids = [qstate.fidelity(fr.correct(st).normalized(), ref) for st, fr, _, _ in res]
        out["branches"] = len(res)
        out["outcomes"] = [list(rec.outcome) for _, _, rec, _ in res]
        out["frames"] = [fr.to_json() for _, fr, _, _ in res]
    out["min_fidelity"] = round(min(fids), 12)
    return min(fids) > 1 - 1e-10, out


def cmd_run(cfg: RunConfig) -> tuple[bool, dict]:
    path = cfg.extra.get("circuit")
    if not path:
        raise UsageError("run needs --circuit")
    with open(path) as fh:
        circuit = mbqc.parse_circuit(json.load(fh))
    lat, _ = _lattice(cfg, "builtin:square:4x4")
    d = cfg.d or lat.qudit_dim or 2
    policy, ptext = _policy(cfg, 10**6)
    order = cfg.extra.get("order") or "before"
    results = mbqc.run_circuit(circuit, mbqc.FaceResource.from_lattice(lat, d), policy, order=order, seed=cfg.seed)
    ref = mbqc.circuit_reference(circuit, d)
    fids = [r.fidelity_with(ref) for r in results]
    out = {
        "command": "run",
        "circuit": path,
        "lattice": lat.name,
        "d": d,
        "policy": ptext,
        "order": order,
        "branches": len(results),
        "outputs": results[0].outputs,
        "min_fidelity": round(min(fids), 12),
        "transcript": results[0].branch.transcript(),
        "frame": results[0].branch.frame.restricted(results[0].outputs).to_json(),
    }
    return min(fids) > 1 - 1e-9, out


def cmd_route(cfg: RunConfig) -> tuple[bool, dict]:
    lat, _ = _lattice(cfg, "builtin:square:12x12")
    frac = cfg.extra.get("dilute") or 0.0
    target = routing.DilutedLattice.random(lat, frac, cfg.seed) if frac else routing.DilutedLattice(lat)
    spacing = cfg.extra.get("spacing") or 4
    out = {"command": "route", "lattice": lat.name, "spacing": spacing, "dilute": frac, "seed": cfg.seed}
    out["holes"] = sorted(target.holes)
    try:
        plan = routing.route_honeycomb_minor(target, spacing, cfg.seed)
    except routing.RoutingError as err:
        out["error"] = str(err)
        out["region"] = err.region
        return False, out
    work = target.lattice
    bad = routing.check_plan(plan, work, lat.face_adjacency())
    g = plan.target_graph(work)
    out.update(
        {
            "hubs": list(plan.hubs),
            "lines": len(plan.lines),
            "max_faces_per_line": max(len(ln.faces) for ln in plan.lines),
            "plan_violations": bad,
            "honeycomb_target": routing.matches_family(g, "honeycomb"),
        }
    )
    if cfg.extra.get("out"):
        plan.save(cfg.extra["out"])
        out["plan_file"] = cfg.extra["out"]
    if cfg.extra.get("execute"):
        d = cfg.d or 2
        mp = routing.compile_plan(plan, work)
        branches, bonds = mbqc.reduce_to_bonds(
            qstate.product_plaquette_state(work, d), work, mp, qstate.Sampled(cfg.seed)
        )
        fids = mbqc.bond_fidelities(branches[0], bonds)
        out["bonds"] = len(bonds)
        out["min_bond_fidelity"] = round(min(fids), 12)
        if min(fids) < 1 - 1e-10:
            bad.append("compiled plan did not produce the target bonds")
    return not bad, out


COMMANDS = {
    ("verify", "cocycle"): cmd_verify_cocycle,
    ("verify", "symmetry"): cmd_verify_symmetry,
    ("verify", "boundary"): cmd_verify_boundary,
    ("verify", "czx"): cmd_verify_czx,
    ("reduce", None): cmd_reduce,
    ("teleport", None): cmd_teleport,
    ("run", None): cmd_run,
    ("route", None): cmd_route,
}


def dispatch(cfg: RunConfig) -> tuple[int, dict]:
    """Run one command; returns (exit status, report)."""
    fn = COMMANDS[(cfg.command, cfg.target)]
    try:
        ok, report = fn(cfg)
    except CapacityError as err:
        return EXIT_CAPACITY, {"error": str(err), "kind": "capacity"}
    except (UsageError, GroupError, coh.CohomologyError, LatticeError, mbqc.PlanError, qstate.StateError) as err:
        return EXIT_USAGE, {"error": str(err), "kind": type(err).__name__}
    except (OSError, json.JSONDecodeError, KeyError) as err:
        return EXIT_USAGE, {"error": str(err), "kind": type(err).__name__}
    except mbqc.ResourceError as err:
        return EXIT_FAIL, {"error": str(err), "kind": "resource"}
    report["passed"] = ok
    return (EXIT_OK if ok else EXIT_FAIL), report


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--group", help="Zd or Zd1xZd2")
    p.add_argument("--c", default="1", help="cocycle parameter (comma separated for products)")
    p.add_argument("--gbar", type=int, default=1, help="fixed group element index")
    p.add_argument("--d", type=int, help="local dimension")
    p.add_argument("--lattice", help="lattice file or builtin:NAME[:NXxNY]")
    p.add_argument("--seed", type=int, help=f"random seed (default ${SEED_ENV} or 0)")
    p.add_argument("--policy", help="exhaustive or seed:N")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--max-amps", type=int, default=qstate.DEFAULT_MAX_AMPS)
    p.add_argument("--format", choices=("text", "json"), default="text")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spt-mbqc", description="Plaquette-state symmetry checks and MBQC pipeline")
    sub = ap.add_subparsers(dest="command", required=True)
    ver = sub.add_parser("verify", help="exact verification commands")
    vsub = ver.add_subparsers(dest="target", required=True)
    for name in ("cocycle", "symmetry", "boundary", "czx"):
        p = vsub.add_parser(name)
        _common(p)
        if name == "symmetry":
            p.add_argument("--derive", action="store_true", help="ignore the shipped branching and derive one")
        if name == "boundary":
            p.add_argument("--length", type=int)
            p.add_argument("--directions", help="bond directions as a string of + and -")
        if name == "czx":
            p.add_argument("--variant", choices=("czx", "sczx", "iczx"), default="czx")
    p = sub.add_parser("reduce", help="plaquette state to bonds")
    _common(p)
    p.add_argument("--pattern", help="checkerboard, builtin or a plan JSON file")
    p = sub.add_parser("teleport", help="gate teleportation on a minimal layout")
    _common(p)
    p.add_argument("--gate", help="H, F, X, Z, I, CZ or a unitary JSON file")
    p = sub.add_parser("run", help="teleport a circuit through a resource lattice")
    _common(p)
    p.add_argument("--circuit", required=True)
    p.add_argument("--order", choices=("before", "after", "shuffle"))
    p = sub.add_parser("route", help="honeycomb-minor routing")
    _common(p)
    p.add_argument("--dilute", type=float, default=0.0)
    p.add_argument("--spacing", type=int, default=4)
    p.add_argument("--out")
    p.add_argument("--execute", action="store_true", help="run the compiled plan and check its bonds")
    return ap


_EXTRA = ("derive", "length", "directions", "variant", "pattern", "gate", "circuit", "order", "dilute", "spacing", "out", "execute")


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    seed = ns.seed if ns.seed is not None else _default_seed()
    extra = {k: getattr(ns, k) for k in _EXTRA if getattr(ns, k, None) is not None}
    return RunConfig(
        command=ns.command,
        target=getattr(ns, "target", None),
        lattice=ns.lattice,
        group=ns.group,
        c=ns.c,
        gbar=ns.gbar,
        d=ns.d,
        seed=seed,
        policy=ns.policy,
        max_amps=ns.max_amps,
        report=ns.report,
        fmt=ns.format,
        extra=extra,
    )


def _summary(status: int, report: dict) -> str:
    word = {EXIT_OK: "PASS", EXIT_FAIL: "FAIL", EXIT_USAGE: "ERROR", EXIT_CAPACITY: "CAPACITY"}[status]
    if "error" in report:
        return f"{word}: {report['error']}"
    keys = ("lattice", "group", "c", "d", "branches", "min_fidelity", "min_bond_fidelity", "lines", "bonds")
    bits = [f"{k}={report[k]}" for k in keys if k in report and not isinstance(report[k], (list, dict))]
    if "class_invariant" in report:
        ci = report["class_invariant"]
        bits.append(f"class_invariant={ci['num']}/{ci['order']}")
    return f"{word} {report.get('command', '')} " + " ".join(bits)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
    except UsageError as err:
        print(f"ERROR: {err}", file=sys.stderr)
        return EXIT_USAGE
    status, report = dispatch(cfg)
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default)
    if cfg.report:
        with open(cfg.report, "w") as fh:
            fh.write(text + "\n")
    if cfg.fmt == "json":
        print(text)
    else:
        print(_summary(status, report), file=sys.stdout if status in (EXIT_OK, EXIT_FAIL) else sys.stderr)
    return status


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x) if isinstance(x, (set, frozenset)) else list(x)
    if hasattr(x, "to_json"):
        return x.to_json()
    return str(x)


if __name__ == "__main__":
    sys.exit(main())
