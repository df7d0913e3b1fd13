"""Independent reference solvers used by the tests.

None of these call into the package; they only share the problem data.
"""
import numpy as np


def _scaled_simplex_projection(C, H, iters=200):
    """Row-wise argmin of sum_m H_m (t_m - C_m)^2 over the probability simplex.

    The minimizer is t_m = max(0, C_m - nu / H_m); nu is found by bisection.
    """
    lo = np.min((C - 1.0) * H, axis=1, keepdims=True)  # every term >= 1
    hi = np.max(C * H, axis=1, keepdims=True)          # every term is 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = np.maximum(0.0, C - mid / H).sum(axis=1, keepdims=True) > 1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    t = np.maximum(0.0, C - 0.5 * (lo + hi) / H)
    return t / t.sum(axis=1, keepdims=True)


def theta_by_projected_newton(a, p, iters=200, tol=1e-15):
    """Minimize sum_m a_m / theta_m subject to ||theta||_p <= 1, row-wise.

    At the optimum the constraint is active, so substitute t = theta^p
    (t on the simplex) and minimize the convex, separable
    f(t) = sum_m a_m t_m^(-1/p). Each step projects the Newton point onto
    the simplex in the metric of the diagonal Hessian and backtracks until
    f decreases. Requires a > 0.
    """
    a = np.atleast_2d(np.asarray(a, float))
    # rescaling a leaves the minimizer unchanged and keeps f near one
    a = a / a.max(axis=1, keepdims=True)

    def f(t):
        with np.errstate(divide="ignore"):
            return np.sum(a * t ** (-1.0 / p), axis=1)

    t = np.full(a.shape, 1.0 / a.shape[1])
    for _ in range(iters):
        g = -(a / p) * t ** (-1.0 / p - 1.0)
        h = (a / p) * (1.0 / p + 1.0) * t ** (-1.0 / p - 2.0)
        d = _scaled_simplex_projection(t - g / h, h) - t
        step = np.ones((a.shape[0], 1))
        # accept ties within rounding, or f's flatness near the optimum stalls it
        f0 = f(t) * (1.0 + 1e-14)
        for _ in range(60):
            worse = ~(f(t + step * d) <= f0)
            if not worse.any():
                break
            step[worse] *= 0.5
        t = t + step * d
        if np.max(np.abs(step * d)) < tol:
            break
    return t ** (1.0 / p)


def svm_dual_qp(K, y, C):
    """Labeled-form SVM dual via cvxopt; returns (objective, a >= 0)."""
    from cvxopt import matrix, solvers

    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    P = matrix(Q + 1e-13 * np.eye(n))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.hstack([np.zeros(n), np.full(n, C)]))
    A = matrix(y.reshape(1, -1).astype(float))
    b = matrix(0.0)
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12,
            "maxiters": 200}
    sol = solvers.qp(P, q, G, h, A, b, options=opts)
    a = np.array(sol["x"]).ravel()
    return float(a.sum() - 0.5 * a @ Q @ a), a


def feature_map(K, tol=1e-12):
    """F with F F' = K (eigenvalue factorization, negative tail dropped)."""
    w, V = np.linalg.eigh(K)
    keep = w > tol * max(1.0, w.max())
    return V[:, keep] * np.sqrt(w[keep])


def mixed_norm_primal(Ks, y, C, p):
    """Decision values of the block-norm primal at q = 2p/(p+1).

    First the equivalent fixed-C problem
        C sum hinge + 1/2 (sum_m ||w_m||^q)^(2/q)
    is solved. Matching the optimality conditions of both problems at its
    block-norm value N = ||w||_{2,q} fixes C~ = C (q/2) N^(q-2), and the literal block-norm problem C~ sum hinge + 1/2 sum_m ||w_m||^q
    is solved and returned.
    """
    import cvxpy as cp

    q = 2.0 * p / (p + 1.0)
    Fs = [feature_map(K) for K in Ks]
    n = len(y)

    def solve(make_objective):
        ws = [cp.Variable(F.shape[1]) for F in Fs]
        b = cp.Variable()
        f = sum(F @ w for F, w in zip(Fs, ws)) + b
        hinge = cp.sum(cp.pos(1 - cp.multiply(y, f)))
        norms = cp.hstack([cp.norm(w, 2) for w in ws])
        prob = cp.Problem(cp.Minimize(make_objective(hinge, norms)))
        prob.solve(solver=cp.CLARABEL)
        wn = np.array([np.linalg.norm(w.value) for w in ws])
        return np.asarray(f.value).reshape(n), wn

    _, wn = solve(lambda h, nr: C * h + 0.5 * cp.quad_over_lin(cp.pnorm(nr, q), 1))
    C_tilde = C * (q / 2.0) * np.sum(wn**q) ** ((q - 2.0) / q)
    f16, _ = solve(lambda h, nr: C_tilde * h + 0.5 * cp.sum(cp.power(nr, q)))
    return f16
