"""Small convergence study: full grids against the combination technique,
both measured against a level-7 reference (built once, then cached).

    python demos/full_vs_sparse.py
"""

from sgadi.harness import StudyConfig, run_study


def main():
    cfg = StudyConfig(full_levels=(3, 4, 5, 6), sparse_levels=(6, 7, 8), reference_level=7)
    print(f"{'method':>6} {'n':>3} {'nodes':>7} {'error':>10} {'order':>6} {'seconds':>8}")
    for r in run_study(cfg):
        order = "" if r.order is None else f"{r.order:.2f}"
        print(f"{r.method:>6} {r.n:>3} {r.nodes:>7} {r.error:10.3e} {order:>6} {r.seconds:8.2f}")


if __name__ == "__main__":
    main()
