"""Compare uniform and knot-optimised errors on the 1D approximation target.

    python3 scripts/adaptivity_1d.py [--degree 3] [--cells 17] [--iters 1000]
"""
import argparse
import time

from freeknot.energy_opt import OptimConfig, best_of, optimal_energy, sweep
from freeknot.problems import error_metrics, make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="approx1d")
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--cells", type=int, default=17)
    ap.add_argument("--iters", type=int, default=1000)
    args = ap.parse_args()

    prob = make_problem(args.problem)
    space = prob.init_space(1, args.cells, args.degree)
    form = prob.form()
    _, W0 = optimal_energy(space, form)
    uniform = error_metrics(prob, space, W0)
    start = time.perf_counter()
    results = sweep(space, form, OptimConfig(max_iters=args.iters), mode=prob.mode)
    for r in results:
        m = error_metrics(prob, r.space, r.W)
        print(f"lr {r.lr:<8g} iters {r.iters:5d}  energy {r.energy:+.8e}  err {m.energy:.3e}")
    best = best_of(results)
    adapted = error_metrics(prob, best.space, best.W)
    print(f"dofs {space.dim_weights}, uniform err {uniform.energy:.3e}, adapted err {adapted.energy:.3e}, "
          f"ratio {adapted.energy / uniform.energy:.4f} ({time.perf_counter() - start:.0f} s)")
    print("knots:", " ".join(f"{k:.5f}" for k in best.space.knot_params()))


if __name__ == "__main__":
    main()
