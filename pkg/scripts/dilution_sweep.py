"""Route a honeycomb minor on randomly diluted square lattices and tally successes."""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass

from spt_mbqc.lattice import builtin
from spt_mbqc.routing import DilutedLattice, RoutingError, check_plan, matches_family, route_honeycomb_minor


@dataclass
class SweepConfig:
    size: int = 12
    spacing: int = 4
    fraction: float = 0.05
    seeds: int = 20
    attempts: int = 8


def sweep(cfg: SweepConfig) -> dict:
    base, _ = builtin("square", cfg.size, cfg.size)
    rows = []
    for seed in range(cfg.seeds):
        dl = DilutedLattice.random(base, cfg.fraction, seed)
        t0 = time.perf_counter()
        try:
            plan = route_honeycomb_minor(dl, spacing=cfg.spacing, seed=seed, attempts=cfg.attempts)
        except RoutingError as err:
            rows.append({"seed": seed, "holes": len(dl.holes), "ok": False, "reason": str(err)})
            continue
        lat = dl.lattice
        ok = not check_plan(plan, lat, base.face_adjacency()) and matches_family(plan.target_graph(lat), "honeycomb")
        rows.append(
            {"seed": seed, "holes": len(dl.holes), "ok": ok, "lines": len(plan.lines), "seconds": round(time.perf_counter() - t0, 3)}
        )
    return {"config": asdict(cfg), "successes": sum(r["ok"] for r in rows), "runs": rows}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in asdict(SweepConfig()).items():
        ap.add_argument(f"--{name}", type=type(default), default=default)
    ap.add_argument("--json", action="store_true", help="print the full result as JSON")
    cfg = SweepConfig(**{k: v for k, v in vars(ap.parse_args()).items() if k != "json"})
    out = sweep(cfg)
    if ap.parse_args().json:
        print(json.dumps(out, indent=2))
        return
    for r in out["runs"]:
        print(f"seed {r['seed']:3d} holes {r['holes']:3d} {'ok' if r['ok'] else 'FAIL ' + r.get('reason', '')}")
    print(f"{out['successes']}/{cfg.seeds} routed at dilution {cfg.fraction:g}")


if __name__ == "__main__":
    main()
