"""Independent reference values: characteristic polynomials solved by bisection."""

import numpy as np


def bisect(f, a, b, tol=1e-15):
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
        if b - a < tol:
            break
    return 0.5 * (a + b)


def cubic_roots(c2, c1, c0):
    """All real roots of x^3 + c2 x^2 + c1 x + c0 by sign changes on a grid then bisection."""
    f = lambda x: ((x + c2) * x + c1) * x + c0
    grid = np.linspace(-20, 20, 40001)
    vals = [f(x) for x in grid]
    roots = []
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa == 0:
            roots.append(a)
        elif (fa < 0) != (fb < 0):
            roots.append(bisect(f, a, b))
    return sorted(roots)


# charge-2 block of one cavity, beta12 = sqrt 2, Delta = 0.4:
#   det([[0, s2, 0], [s2, 0, s2], [0, s2, -0.4]] - x) = -(x^3 + 0.4 x^2 - 4 x - 0.8)
E2_ORACLE = cubic_roots(0.4, -4.0, -0.8)[0]
# charge-3 block: n = 3, 2, 1 with levels g, e1, e2
N3_ORACLE = cubic_roots(0.4, -7.0, -1.2)
