"""Average the deformed structure of scenario s1 and report its invariants."""

import numpy as np

from acpoisson import exterior_derivative, jacobi_residual, build_scenario
from acpoisson.averaging import averaged_poisson_field, group_samples, invariance_residual


def main(eps=0.05):
    sc = build_scenario("s1")
    pts = sc.sample(30, 0)
    Q = sc.Q(64, 32)
    pe = sc.family.eval(eps)
    avg = averaged_poisson_field(pe, Q, dQ=exterior_derivative(Q), eps=eps)
    angles = group_samples(sc.action.k, 8, 7)
    print(f"scenario {sc.name}, eps = {eps}")
    print(f"  Jacobi residual of the deformation : {jacobi_residual(pe, pts):.3e}")
    print(f"  invariance residual before         : {invariance_residual(sc.action, pe, pts, angles):.3e}")
    print(f"  Jacobi residual of the average     : {jacobi_residual(avg, pts):.3e}")
    print(f"  invariance residual after          : {invariance_residual(sc.action, avg, pts, angles):.3e}")
    print(f"  max |avg - Pi_eps|                 : {np.max(np.abs(avg(pts) - pe(pts))):.3e}")


if __name__ == "__main__":
    main()
