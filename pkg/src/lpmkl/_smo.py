"""Working-set SMO for the signed-alpha SVM dual, numba and numpy flavours.

Both flavours solve

    max_a  sum_i y_i a_i - 1/2 a' K a    s.t.  sum_i a_i = 0,  lb_i <= a_i <= ub_i

with ``[lb_i, ub_i] = [0, C]`` for y_i = +1 and ``[-C, 0]`` for y_i = -1. The
state is ``(alpha, ghat)`` with ``ghat = K alpha``; the partial derivative of
the objective is ``F = y - ghat``. Variables that may still increase form
the "up" set, those that may decrease the "low" set; the maximal KKT
violation is ``(max_up F - min_low F) / 2``.

Status codes returned by the loops: 0 converged, 1 iteration cap.
"""
import numpy as np

from ._jit import njit

TAU = 1e-12
STATUS_OK = 0
STATUS_MAX_ITER = 1


# --------------------------------------------------------------------- numba

@njit
def _violation_nb(alpha, ghat, y, lb, ub, active):
    n = alpha.shape[0]
    m_up = -np.inf
    m_low = np.inf
    for t in range(n):
        if not active[t]:
            continue
        f = y[t] - ghat[t]
        if alpha[t] < ub[t] and f > m_up:
            m_up = f
        if alpha[t] > lb[t] and f < m_low:
            m_low = f
    return m_up, m_low


@njit
def _select_nb(alpha, ghat, y, lb, ub, active, q, chosen, out):
    """Fill ``out`` with up to q indices: q/2 steepest up, q/2 steepest low."""
    n = alpha.shape[0]
    half = q // 2
    k = 0
    for _ in range(half):
        best = -1
        bval = -np.inf
        for t in range(n):
            if active[t] and not chosen[t] and alpha[t] < ub[t]:
                f = y[t] - ghat[t]
                if f > bval:
                    bval = f
                    best = t
        if best < 0:
            break
        chosen[best] = True
        out[k] = best
        k += 1
    for _ in range(half):
        best = -1
        bval = np.inf
        for t in range(n):
            if active[t] and not chosen[t] and alpha[t] > lb[t]:
                f = y[t] - ghat[t]
                if f < bval:
                    bval = f
                    best = t
        if best < 0:
            break
        chosen[best] = True
        out[k] = best
        k += 1
    for s in range(k):
        chosen[out[s]] = False
    return k


@njit
def _subproblem_nb(KB, aB, FB, lbB, ubB, tol, max_inner):
    """Optimise the working-set variables with pairwise analytic steps."""
    k = aB.shape[0]
    for _ in range(max_inner):
        i = -1
        j = -1
        fi = -np.inf
        fj = np.inf
        for s in range(k):
            if aB[s] < ubB[s] and FB[s] > fi:
                fi = FB[s]
                i = s
            if aB[s] > lbB[s] and FB[s] < fj:
                fj = FB[s]
                j = s
        if i < 0 or j < 0 or i == j or 0.5 * (fi - fj) <= tol:
            break
        curv = KB[i, i] + KB[j, j] - 2.0 * KB[i, j]
        if curv < TAU:
            curv = TAU
        t = (fi - fj) / curv
        cap_i = ubB[i] - aB[i]
        cap_j = aB[j] - lbB[j]
        if t >= cap_i or t >= cap_j:
            if cap_i <= cap_j:
                t = cap_i
                aB[i] = ubB[i]
                aB[j] = aB[j] - t
                if cap_i == cap_j:
                    aB[j] = lbB[j]
            else:
                t = cap_j
                aB[j] = lbB[j]
                aB[i] = aB[i] + t
        else:
            aB[i] = aB[i] + t
            aB[j] = aB[j] - t
        for s in range(k):
            FB[s] -= t * (KB[s, i] - KB[s, j])


@njit
def _shrink_nb(alpha, ghat, y, lb, ub, active, m_up, m_low):
    n = alpha.shape[0]
    for t in range(n):
        if not active[t]:
            continue
        f = y[t] - ghat[t]
        at_lb = alpha[t] <= lb[t]
        at_ub = alpha[t] >= ub[t]
        if at_lb and f < m_low:
            active[t] = False
        elif at_ub and f > m_up:
            active[t] = False


@njit
def _objective_nb(alpha, ghat, y):
    s = 0.0
    for t in range(alpha.shape[0]):
        s += y[t] * alpha[t] - 0.5 * alpha[t] * ghat[t]
    return s


@njit
def smo_dense_nb(K, y, C, alpha, ghat, eps, q, max_iter, shrinking, history):
    n = K.shape[0]
    lb = np.where(y > 0, 0.0, -C)
    ub = np.where(y > 0, C, 0.0)
    active = np.ones(n, dtype=np.bool_)
    chosen = np.zeros(n, dtype=np.bool_)
    B = np.empty(q, dtype=np.int64)
    inner_tol = 0.1 * eps
    shrink_every = min(n, 1000)
    n_active = n
    it = 0
    status = STATUS_OK
    while True:
        m_up, m_low = _violation_nb(alpha, ghat, y, lb, ub, active)
        viol = 0.5 * (m_up - m_low)
        if not viol > eps:
            if n_active < n:
                active[:] = True
                n_active = n
                continue
            break
        if it >= max_iter:
            status = STATUS_MAX_ITER
            break
        k = _select_nb(alpha, ghat, y, lb, ub, active, q, chosen, B)
        KB = np.empty((k, k))
        aB = np.empty(k)
        FB = np.empty(k)
        lbB = np.empty(k)
        ubB = np.empty(k)
        for s in range(k):
            bs = B[s]
            aB[s] = alpha[bs]
            FB[s] = y[bs] - ghat[bs]
            lbB[s] = lb[bs]
            ubB[s] = ub[bs]
            for r in range(k):
                KB[s, r] = K[bs, B[r]]
        _subproblem_nb(KB, aB, FB, lbB, ubB, inner_tol, 50 * k)
        for s in range(k):
            bs = B[s]
            d = aB[s] - alpha[bs]
            if d != 0.0:
                alpha[bs] = aB[s]
                for t in range(n):
                    ghat[t] += d * K[bs, t]
        it += 1
        if history.shape[0] >= it:
            history[it - 1] = _objective_nb(alpha, ghat, y)
        if shrinking and it % shrink_every == 0:
            _shrink_nb(alpha, ghat, y, lb, ub, active, m_up, m_low)
            n_active = 0
            for t in range(n):
                if active[t]:
                    n_active += 1
    m_up, m_low = _violation_nb(alpha, ghat, y, lb, ub, np.ones(n, dtype=np.bool_))
    return it, status, max(0.0, 0.5 * (m_up - m_low))


# --------------------------------------------------------------------- numpy

def _bounds(y, C):
    return np.where(y > 0, 0.0, -C), np.where(y > 0, C, 0.0)


def violation_np(alpha, ghat, y, lb, ub, active=None):
    F = y - ghat
    up = alpha < ub
    low = alpha > lb
    if active is not None:
        up &= active
        low &= active
    m_up = F[up].max() if up.any() else -np.inf
    m_low = F[low].min() if low.any() else np.inf
    return m_up, m_low


def _select_np(alpha, ghat, y, lb, ub, active, q):
    F = y - ghat
    half = q // 2
    up = np.flatnonzero(active & (alpha < ub))
    top = up[np.argsort(-F[up], kind="stable")[:half]]
    low = np.flatnonzero(active & (alpha > lb))
    low = low[~np.isin(low, top)]
    bottom = low[np.argsort(F[low], kind="stable")[:half]]
    return np.concatenate([top, bottom])


def _subproblem_np(KB, aB, FB, lbB, ubB, tol, max_inner):
    for _ in range(max_inner):
        up = aB < ubB
        low = aB > lbB
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, FB, -np.inf)))
        j = int(np.argmin(np.where(low, FB, np.inf)))
        if i == j or 0.5 * (FB[i] - FB[j]) <= tol:
            break
        curv = max(KB[i, i] + KB[j, j] - 2.0 * KB[i, j], TAU)
        t = (FB[i] - FB[j]) / curv
        cap_i = ubB[i] - aB[i]
        cap_j = aB[j] - lbB[j]
        if t >= cap_i or t >= cap_j:
            if cap_i <= cap_j:
                t = cap_i
                aB[i] = ubB[i]
                aB[j] = lbB[j] if cap_i == cap_j else aB[j] - t
            else:
                t = cap_j
                aB[j] = lbB[j]
                aB[i] = aB[i] + t
        else:
            aB[i] += t
            aB[j] -= t
        FB -= t * (KB[:, i] - KB[:, j])


def smo_dense_np(K, y, C, alpha, ghat, eps, q, max_iter, shrinking, history):
    n = K.shape[0]
    lb, ub = _bounds(y, C)
    active = np.ones(n, dtype=bool)
    shrink_every = min(n, 1000)
    it = 0
    status = STATUS_OK
    while True:
        m_up, m_low = violation_np(alpha, ghat, y, lb, ub, active)
        if not 0.5 * (m_up - m_low) > eps:
            if not active.all():
                active[:] = True
                continue
            break
        if it >= max_iter:
            status = STATUS_MAX_ITER
            break
        B = _select_np(alpha, ghat, y, lb, ub, active, q)
        aB = alpha[B].copy()
        FB = y[B] - ghat[B]
        _subproblem_np(K[np.ix_(B, B)], aB, FB, lb[B], ub[B], 0.1 * eps, 50 * len(B))
        d = aB - alpha[B]
        moved = d != 0.0
        if moved.any():
            alpha[B[moved]] = aB[moved]
            ghat += d[moved] @ K[B[moved]]
        it += 1
        if history.shape[0] >= it:
            history[it - 1] = y @ alpha - 0.5 * alpha @ ghat
        if shrinking and it % shrink_every == 0:
            F = y - ghat
            active &= ~(((alpha <= lb) & (F < m_low)) | ((alpha >= ub) & (F > m_up)))
    m_up, m_low = violation_np(alpha, ghat, y, lb, ub)
    return it, status, max(0.0, 0.5 * (m_up - m_low))


# ------------------------------------------------- interleaved MKL chunking
#
# Status codes: 0 converged (KKT within eps and the MKL step frozen),
# 1 chunking-iteration cap, 2 theta-update cap, 3 no positive quadratic term.

STATUS_MAX_UPDATES = 2
STATUS_DEGENERATE = 3


@njit
def _theta_from_quad_nb(qv, p, theta):
    """theta_m = q_m^(1/(p+1)) / (sum q^(p/(p+1)))^(1/p), nonpositive q_m -> 0."""
    M = qv.shape[0]
    top = 0.0
    for m in range(M):
        if qv[m] > top:
            top = qv[m]
    if not top > 0.0:
        return False
    floor = 1e-15 * top
    denom = 0.0
    for m in range(M):
        if qv[m] > floor:
            denom += (qv[m] / top) ** (p / (p + 1.0))
    denom = denom ** (1.0 / p)
    for m in range(M):
        if qv[m] > floor:
            theta[m] = (qv[m] / top) ** (1.0 / (p + 1.0)) / denom
        else:
            theta[m] = 0.0
    return True


@njit
def interleaved_nb(Ks, y, C, theta, p, alpha, g, ghat, eps_svm, eps_mkl, q,
                   interval, max_iter, max_updates, omega_old, have_old, theta_hist):
    M = Ks.shape[0]
    n = Ks.shape[1]
    lb = np.where(y > 0, 0.0, -C)
    ub = np.where(y > 0, C, 0.0)
    active = np.ones(n, dtype=np.bool_)
    chosen = np.zeros(n, dtype=np.bool_)
    B = np.empty(q, dtype=np.int64)
    Sm = np.empty(M)
    qv = np.empty(M)
    inner_tol = 0.1 * eps_svm
    frozen = False
    it = 0
    updates = 0
    since = 0
    status = STATUS_OK
    while True:
        m_up, m_low = _violation_nb(alpha, ghat, y, lb, ub, active)
        kkt_ok = not 0.5 * (m_up - m_low) > eps_svm
        if kkt_ok and frozen:
            break
        if not kkt_ok:
            if it >= max_iter:
                status = STATUS_MAX_ITER
                break
            k = _select_nb(alpha, ghat, y, lb, ub, active, q, chosen, B)
            KB = np.zeros((k, k))
            aB = np.empty(k)
            FB = np.empty(k)
            lbB = np.empty(k)
            ubB = np.empty(k)
            for s in range(k):
                bs = B[s]
                aB[s] = alpha[bs]
                FB[s] = y[bs] - ghat[bs]
                lbB[s] = lb[bs]
                ubB[s] = ub[bs]
                for r in range(k):
                    acc = 0.0
                    for m in range(M):
                        acc += theta[m] * Ks[m, bs, B[r]]
                    KB[s, r] = acc
            _subproblem_nb(KB, aB, FB, lbB, ubB, inner_tol, 50 * k)
            for s in range(k):
                bs = B[s]
                d = aB[s] - alpha[bs]
                if d != 0.0:
                    alpha[bs] = aB[s]
                    for m in range(M):
                        tm = theta[m]
                        for t in range(n):
                            v = d * Ks[m, bs, t]
                            g[m, t] += v
                            ghat[t] += tm * v
            it += 1
            since += 1
        if frozen:
            continue
        if kkt_ok or since >= interval:
            since = 0
            L = 0.0
            for t in range(n):
                L += y[t] * alpha[t]
            S = 0.0
            for m in range(M):
                acc = 0.0
                for t in range(n):
                    acc += g[m, t] * alpha[t]
                Sm[m] = 0.5 * acc
                S += theta[m] * Sm[m]
            omega = L - S
            denom = omega_old
            if abs(denom) < 1e-12:
                denom = 1e-12
            if (not have_old) or abs(1.0 - omega / denom) >= eps_mkl:
                if updates >= max_updates:
                    status = STATUS_MAX_UPDATES
                    break
                for m in range(M):
                    qv[m] = 2.0 * theta[m] * theta[m] * Sm[m]
                if not _theta_from_quad_nb(qv, p, theta):
                    status = STATUS_DEGENERATE
                    break
                for t in range(n):
                    acc = 0.0
                    for m in range(M):
                        acc += theta[m] * g[m, t]
                    ghat[t] = acc
                if updates < theta_hist.shape[0]:
                    theta_hist[updates, :] = theta
                updates += 1
            else:
                frozen = True
            omega_old = omega
            have_old = True
    m_up, m_low = _violation_nb(alpha, ghat, y, lb, ub, active)
    return it, status, updates, omega_old, max(0.0, 0.5 * (m_up - m_low))


def _theta_from_quad_np(qv, p, theta):
    top = qv.max()
    if not top > 0.0:
        return False
    keep = qv > 1e-15 * top
    r = np.where(keep, qv / top, 0.0)
    denom = np.sum(r[keep] ** (p / (p + 1.0))) ** (1.0 / p)
    theta[:] = np.where(keep, r ** (1.0 / (p + 1.0)) / denom, 0.0)
    return True


def interleaved_np(Ks, y, C, theta, p, alpha, g, ghat, eps_svm, eps_mkl, q,
                   interval, max_iter, max_updates, omega_old, have_old, theta_hist):
    M, n, _ = Ks.shape
    lb, ub = _bounds(y, C)
    active = np.ones(n, dtype=bool)
    frozen = False
    it = updates = since = 0
    status = STATUS_OK
    while True:
        m_up, m_low = violation_np(alpha, ghat, y, lb, ub)
        kkt_ok = not 0.5 * (m_up - m_low) > eps_svm
        if kkt_ok and frozen:
            break
        if not kkt_ok:
            if it >= max_iter:
                status = STATUS_MAX_ITER
                break
            B = _select_np(alpha, ghat, y, lb, ub, active, q)
            KB = np.tensordot(theta, Ks[:, B][:, :, B], axes=1)
            aB = alpha[B].copy()
            FB = y[B] - ghat[B]
            _subproblem_np(KB, aB, FB, lb[B], ub[B], 0.1 * eps_svm, 50 * len(B))
            d = aB - alpha[B]
            moved = d != 0.0
            if moved.any():
                alpha[B[moved]] = aB[moved]
                dg = np.einsum("b,mbt->mt", d[moved], Ks[:, B[moved], :])
                g += dg
                ghat += theta @ dg
            it += 1
            since += 1
        if frozen:
            continue
        if kkt_ok or since >= interval:
            since = 0
            Sm = 0.5 * (g @ alpha)
            omega = y @ alpha - theta @ Sm
            denom = omega_old if abs(omega_old) >= 1e-12 else 1e-12
            if (not have_old) or abs(1.0 - omega / denom) >= eps_mkl:
                if updates >= max_updates:
                    status = STATUS_MAX_UPDATES
                    break
                if not _theta_from_quad_np(2.0 * theta**2 * Sm, p, theta):
                    status = STATUS_DEGENERATE
                    break
                ghat[:] = theta @ g
                if updates < theta_hist.shape[0]:
                    theta_hist[updates] = theta
                updates += 1
            else:
                frozen = True
            omega_old = omega
            have_old = True
    m_up, m_low = violation_np(alpha, ghat, y, lb, ub)
    return it, status, updates, omega_old, max(0.0, 0.5 * (m_up - m_low))


def smo_dense(*args):
    from ._jit import USE_NUMBA
    return (smo_dense_nb if USE_NUMBA else smo_dense_np)(*args)


def interleaved(*args):
    from ._jit import USE_NUMBA
    return (interleaved_nb if USE_NUMBA else interleaved_np)(*args)
