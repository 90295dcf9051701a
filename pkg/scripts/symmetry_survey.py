"""Check the on-site and global symmetry over builtin tilings, groups and classes."""
from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field

from spt_mbqc.cohomology import cocycle_to_cochain, standard_cocycle
from spt_mbqc.groups import FiniteGroup, GroupSpec
from spt_mbqc.lattice import builtin
from spt_mbqc.symmetry import verify_global_symmetry, verify_linear_rep


@dataclass
class SurveyConfig:
    lattices: list[tuple[str, int, int]] = field(
        default_factory=lambda: [
            ("square", 2, 2),
            ("triangular", 1, 1),
            ("triangular", 2, 1),
            ("honeycomb", 1, 1),
            ("honeycomb", 2, 1),
            ("kagome", 1, 1),
            ("kagome", 2, 1),
        ]
    )
    orders: tuple[int, ...] = (2, 3)


def survey(cfg: SurveyConfig):
    for name, nx, ny in cfg.lattices:
        lat, br = builtin(name, nx, ny)
        for d in cfg.orders:
            for c in range(d):
                nu = cocycle_to_cochain(standard_cocycle(FiniteGroup(GroupSpec((d,))), c))
                t0 = time.perf_counter()
                linear = all(verify_linear_rep(nu, *br.sets[lab], len(lat.sites[0].partons)).passed for lab in br.labels())
                try:
                    glob = verify_global_symmetry(nu, br, lat).passed
                except Exception as err:  # capacity limits on large tilings
                    glob = type(err).__name__
                yield name, (nx, ny), d, c, linear, glob, time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--orders", type=int, nargs="+", default=[2, 3])
    cfg = SurveyConfig(orders=tuple(ap.parse_args().orders))
    print(f"{'lattice':<12} {'size':<6} {'d':>2} {'c':>2} {'linear':>7} {'global':>7} {'secs':>6}")
    for name, size, d, c, linear, glob, secs in survey(cfg):
        print(f"{name:<12} {size[0]}x{size[1]:<4} {d:>2} {c:>2} {str(linear):>7} {str(glob):>7} {secs:6.2f}")


if __name__ == "__main__":
    main()
