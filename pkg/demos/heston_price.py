"""Price an at-the-money put under Heston dynamics on a level-6 full grid
and compare with the semi-closed-form price.

    python demos/heston_price.py
"""

from sgadi.harness import SolveSettings, heston_analytic_price, price_at, solve_level
from sgadi.model import ModelParams, OptionSpec


def main():
    params = ModelParams.from_kind("heston", kappa=2.0, theta=0.1, v=0.1, rho=-0.5, r=0.05)
    spec = OptionSpec()
    u = solve_level(6, SolveSettings(params=params))
    for S in (80.0, 100.0, 120.0):
        pde = price_at(u, S, params.theta, spec, params)
        ref = heston_analytic_price(S, params.theta, spec, params)
        print(f"S={S:6.1f}  pde={pde:9.5f}  fourier={ref:9.5f}  diff={abs(pde - ref):.2e}")


if __name__ == "__main__":
    main()
