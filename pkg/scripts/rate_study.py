"""Print uniform-mesh convergence tables and fitted slopes.

    python3 scripts/rate_study.py [--sizes 16,32,64,128,256]
"""
import argparse

from freeknot import fitted_slope, uniform_errors
from freeknot.problems import make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,32,64,128,256")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    for name, degrees, metric in (("approx1d-smooth", (1, 2, 3), "l2"), ("poisson1d-smooth", (2, 3), "energy")):
        prob = make_problem(name)
        for p in degrees:
            pts = uniform_errors(prob, p, sizes)
            errs = [getattr(r, metric) for r in pts]
            print(f"{name} p={p} ({metric} error)")
            for r, e in zip(pts, errs):
                print(f"  cells {r.cells:4d}  dofs {r.n_dofs:4d}  {e:.4e}")
            print(f"  fitted slope {fitted_slope(sizes, errs):.3f}")


if __name__ == "__main__":
    main()
