"""Fixed-step classical Runge-Kutta on a uniform grid.

The right-hand side is called as ``rhs(m, x)`` where ``m`` indexes the
half-grid t_0, t_{1/2}, t_1, ..., t_N (so ``m = 2j`` is node j).  Callers
precompute coefficient values there with ``MatrixPath.half_grid``.
"""

import numpy as np

from .errors import DivergenceError


def rk4(rhs, x_start, grid, backward=False):
    """Integrate dx/dt = rhs(t, x) over the grid.

    Forward integration starts from x(t_0) = x_start; backward integration
    starts from x(t_N) = x_start and steps towards t_0.  Returns an array of
    shape (N+1,) + x_start.shape indexed by node.
    """
    x = np.array(x_start, dtype=float)
    comp = np.zeros_like(x)  # Kahan compensation for the running sum
    N, h = grid.N, grid.h
    out = np.empty((N + 1,) + x.shape)
    # overflow is caught by the finiteness check and reported as DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        if backward:
            out[N] = x
            for j in range(N - 1, -1, -1):
                m = 2 * j
                k1 = rhs(m + 2, x)
                k2 = rhs(m + 1, x - 0.5 * h * k1)
                k3 = rhs(m + 1, x - 0.5 * h * k2)
                k4 = rhs(m, x - h * k3)
                x, comp = _kahan_add(x, comp, -(h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(j, grid.nodes[j])
                out[j] = x
        else:
            out[0] = x
            for j in range(N):
                m = 2 * j
                k1 = rhs(m, x)
                k2 = rhs(m + 1, x + 0.5 * h * k1)
                k3 = rhs(m + 1, x + 0.5 * h * k2)
                k4 = rhs(m + 2, x + h * k3)
                x, comp = _kahan_add(x, comp, (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(j + 1, grid.nodes[j + 1])
                out[j + 1] = x
    return out


def _kahan_add(total, comp, increment):
    y = increment - comp
    t = total + y
    return t, (t - total) - y
