"""Slow-fast Hamiltonian dynamics on scenario s1 for a few values of eps."""

import numpy as np

from acpoisson import build_scenario, simulate, slow_fast_field
from acpoisson.dynamics import default_monitors


def main(horizon=10.0):
    sc = build_scenario("s1")
    q0 = np.array([0.6, -0.3, 0.2, 0.4])[: sc.dim]
    n_v = sc.chart.n_v
    mons = default_monitors(sc.F, sc.chart)
    print(f"scenario {sc.name}, T = {horizon}")
    for eps in (0.0, 0.02, 0.04, 0.08):
        rec = simulate(slow_fast_field(sc.F, sc.family.eval(eps)), q0, horizon, monitors=mons)
        slow = np.max(np.abs(rec.states[:, n_v:] - q0[n_v:]))
        print(f"  eps = {eps:.2f}: F drift {rec.drift('F'):.2e}, slow drift {slow:.3e}, steps {len(rec.times)}")


if __name__ == "__main__":
    main()
