"""Independent reference computations used to freeze expected test values.

Everything here deliberately avoids the implementation paths it checks:
the ODE oracle is an adaptive high-order explicit solver, the recovery
solve is plain bisection, element integrals use dense high-order Gauss
quadrature, and derivative checks use central finite differences.
"""

import numpy as np
from scipy.integrate import solve_ivp

from monopinn.kinetics import APParameters, CellState, f_phi, f_r


def integrate_cell_explicit(params: APParameters, ic: CellState, tau_eval,
                            stim_fn=None, rtol=1e-11, atol=1e-12,
                            max_step=0.01):
    """High-order adaptive explicit reference trajectory.

    DOP853 with tight tolerances and a capped step; the controller's
    effective resolution is far below the cap, so the result is accurate to
    well beyond the comparison tolerances used in the tests.
    """

    def rhs(tau, y):
        phi, r = y
        stim = 0.0 if stim_fn is None else stim_fn(tau)
        state = CellState(phi=phi, r=r)
        return [f_phi(state, params, stim), f_r(state, params)]

    sol = solve_ivp(rhs, (tau_eval[0], tau_eval[-1]), [ic.phi, ic.r],
                    method="DOP853", t_eval=tau_eval, rtol=rtol, atol=atol,
                    max_step=max_step)
    assert sol.success, sol.message
    return sol.y[0], sol.y[1]


def bisect_recovery(phi, r_n, dtau, params: APParameters, tol=1e-12):
    """Solve r - r_n - f_r(phi, r)*dtau = 0 by bracketed bisection."""

    def residual(r):
        return r - r_n - f_r(CellState(phi=phi, r=r), params) * dtau

    lo, hi = r_n - 1.0, r_n + 1.0
    width = 1.0
    while residual(lo) * residual(hi) > 0.0:
        width *= 2.0
        lo, hi = r_n - width, r_n + width
        if width > 1e8:
            raise RuntimeError("bisection bracket not found")
    f_lo = residual(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        if f_lo * f_mid <= 0.0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def gauss_legendre_3d(order):
    """Tensor-product Gauss points/weights on [-1, 1]^3."""
    x, w = np.polynomial.legendre.leggauss(order)
    pts, wts = [], []
    for i in range(order):
        for j in range(order):
            for k in range(order):
                pts.append((x[i], x[j], x[k]))
                wts.append(w[i] * w[j] * w[k])
    return np.array(pts), np.array(wts)


def central_diff_gradient(fn, x, step=1e-6):
    """Central finite-difference gradient of scalar fn over flat array x."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        grad.flat[i] = (fn(xp) - fn(xm)) / (2.0 * step)
    return grad


def relative_error(approx, exact, floor=1e-12):
    """Norm-wise relative error with a floor for tiny references."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(np.linalg.norm(exact.ravel()), floor)
    return np.linalg.norm((approx - exact).ravel()) / denom
