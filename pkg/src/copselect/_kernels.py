"""Inner loops of the three solvers, written in the numba subset.

Every function here exists twice: the plain Python definition (``*_py``) and a
compiled twin. The Python twins resolve ``evaluate_point`` at call time, which
is how the FEN accounting tests interpose a counting wrapper.

One function evaluation is one call to ``evaluate_point``: objective plus all
constraints at one point.
"""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)
# cap on the ES covariance factor's conditioning along a constraint normal
MAX_CONDITION = 1e10


def _objective_py(obj, x):
    d = x.shape[0]
    if obj == 0:
        s = 0.0
        for i in range(d):
            s += x[i] * x[i]
        return s
    if obj == 1:
        sq = 0.0
        cs = 0.0
        for i in range(d):
            sq += x[i] * x[i]
            cs += math.cos(2.0 * math.pi * x[i])
        return -20.0 * math.exp(-0.2 * math.sqrt(sq / d)) - math.exp(cs / d) + 20.0 + math.e
    s = 0.0
    for i in range(d - 1):
        a = x[i + 1] - x[i] * x[i]
        b = 1.0 - x[i]
        s += 100.0 * a * a + b * b
    return s


_objective = njit(**_JIT)(_objective_py)


def _constraint_value_py(quad, lin, offset, j, x):
    g = offset[j]
    for i in range(x.shape[0]):
        g += (quad[j, i] * x[i] + lin[j, i]) * x[i]
    return g


_constraint_value = njit(**_JIT)(_constraint_value_py)


def evaluate_point_py(obj, quad, lin, offset, kinds, eps, x, per):
    """Return ``(f, phi)`` and write per-constraint violations into ``per``."""
    phi = 0.0
    for j in range(offset.shape[0]):
        g = _constraint_value(quad, lin, offset, j, x)
        if kinds[j] == 2:
            v = abs(g) - eps
        else:
            v = g
        if v < 0.0:
            v = 0.0
        per[j] = v
        phi += v
    f = _objective(obj, x)
    if not math.isfinite(f) or not math.isfinite(phi):
        return math.inf, math.inf
    return f, phi


evaluate_point = njit(**_JIT)(evaluate_point_py)


def eps_less_equal_py(fa, pa, fb, pb, level):
    """True when ``(fa, pa)`` is at least as good as ``(fb, pb)``."""
    if (pa <= level and pb <= level) or pa == pb:
        return fa <= fb
    return pa < pb


eps_less_equal = njit(**_JIT)(eps_less_equal_py)


def eps_less_py(fa, pa, fb, pb, level):
    if (pa <= level and pb <= level) or pa == pb:
        return fa < fb
    return pa < pb


eps_less = njit(**_JIT)(eps_less_py)


def _meets_py(f, phi, f_opt, prec):
    return phi == 0.0 and abs(f - f_opt) <= prec


_meets = njit(**_JIT)(_meets_py)


def de_epsilon_level_py(eps0, cp, cutoff, gen):
    if gen >= cutoff:
        return 0.0
    return eps0 * (1.0 - gen / cutoff) ** cp


de_epsilon_level = njit(**_JIT)(de_epsilon_level_py)


# -- epsilon-constrained DE/rand/1/bin ------------------------------------------

def de_run_py(obj, quad, lin, offset, kinds, eps, lower, upper, f_opt, prec, budget, seed,
              n_pop, scale, cr, eps0, cp, cutoff, archive_size, repair_prob, fd_rel):
    np.random.seed(seed)
    d = lower.shape[0]
    m = offset.shape[0]
    per = np.empty(m)
    width = upper - lower
    pop = np.empty((n_pop, d))
    pf = np.empty(n_pop)
    pp = np.empty(n_pop)
    archive = np.empty((max(archive_size, 1), d))
    n_arch = 0
    trial = np.empty(d)
    probe = np.empty(d)
    grad = np.empty(d)
    count = 0
    best_f = math.inf
    best_p = math.inf

    hit = False
    for i in range(n_pop):
        for k in range(d):
            pop[i, k] = lower[k] + np.random.random() * width[k]
        f, p = evaluate_point(obj, quad, lin, offset, kinds, eps, pop[i], per)
        count += 1
        pf[i] = f
        pp[i] = p
        if eps_less(f, p, best_f, best_p, 0.0):
            best_f, best_p = f, p
        if _meets(f, p, f_opt, prec):
            hit = True
    if hit:
        return True, count, best_f, best_p, count

    gen = 1
    while True:
        level = de_epsilon_level(eps0, cp, cutoff, gen)
        exhausted = False
        for i in range(n_pop):
            # DE/rand/1 with the last difference vector drawn from population plus archive
            r1 = np.random.randint(0, n_pop)
            while r1 == i:
                r1 = np.random.randint(0, n_pop)
            r2 = np.random.randint(0, n_pop)
            while r2 == i or r2 == r1:
                r2 = np.random.randint(0, n_pop)
            r3 = np.random.randint(0, n_pop + n_arch)
            while r3 == i or r3 == r1 or r3 == r2:
                r3 = np.random.randint(0, n_pop + n_arch)
            jrand = np.random.randint(0, d)
            for k in range(d):
                if k == jrand or np.random.random() < cr:
                    x3 = pop[r3, k] if r3 < n_pop else archive[r3 - n_pop, k]
                    v = pop[r1, k] + scale * (pop[r2, k] - x3)
                    if v < lower[k]:
                        v = 0.5 * (lower[k] + pop[i, k])
                    elif v > upper[k]:
                        v = 0.5 * (upper[k] + pop[i, k])
                    trial[k] = v
                else:
                    trial[k] = pop[i, k]
            if count >= budget:
                exhausted = True
                break
            tf, tp = evaluate_point(obj, quad, lin, offset, kinds, eps, trial, per)
            count += 1
            if _meets(tf, tp, f_opt, prec):
                hit = True

            if tp > level and np.random.random() < repair_prob:
                # one Gauss-Newton step on phi from a forward-difference gradient
                gnorm = 0.0
                for k in range(d):
                    h = fd_rel * width[k]
                    for q in range(d):
                        probe[q] = trial[q]
                    if trial[k] + h > upper[k]:
                        h = -h
                    probe[k] = trial[k] + h
                    if count >= budget:
                        exhausted = True
                        break
                    _, qp = evaluate_point(obj, quad, lin, offset, kinds, eps, probe, per)
                    count += 1
                    grad[k] = (qp - tp) / h
                    gnorm += grad[k] * grad[k]
                if exhausted:
                    break
                if gnorm > 0.0 and math.isfinite(gnorm):
                    for k in range(d):
                        v = trial[k] - tp * grad[k] / gnorm
                        if v < lower[k]:
                            v = lower[k]
                        elif v > upper[k]:
                            v = upper[k]
                        probe[k] = v
                    if count >= budget:
                        exhausted = True
                        break
                    rf, rp = evaluate_point(obj, quad, lin, offset, kinds, eps, probe, per)
                    count += 1
                    if _meets(rf, rp, f_opt, prec):
                        hit = True
                    for k in range(d):
                        trial[k] = probe[k]
                    tf, tp = rf, rp

            if eps_less(tf, tp, best_f, best_p, 0.0):
                best_f, best_p = tf, tp
            if eps_less_equal(tf, tp, pf[i], pp[i], level):
                if archive_size > 0:
                    slot = n_arch
                    if n_arch < archive_size:
                        n_arch += 1
                    else:
                        slot = np.random.randint(0, archive_size)
                    for k in range(d):
                        archive[slot, k] = pop[i, k]
                for k in range(d):
                    pop[i, k] = trial[k]
                pf[i] = tf
                pp[i] = tp
        if exhausted:
            return False, budget, best_f, best_p, count
        if hit:
            return True, count, best_f, best_p, count
        gen += 1


de_run = njit(**_JIT)(de_run_py)


# -- (1+1)-ES with covariance adaptation and constraint-normal filtering ----------

def _solve_py(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting."""
    n = b.shape[0]
    m = a.copy()
    x = b.copy()
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if abs(m[r, c]) > abs(m[piv, c]):
                piv = r
        if piv != c:
            for k in range(n):
                t = m[c, k]
                m[c, k] = m[piv, k]
                m[piv, k] = t
            t = x[c]
            x[c] = x[piv]
            x[piv] = t
        diag = m[c, c]
        if diag == 0.0:
            diag = 1e-300
        for r in range(c + 1, n):
            fac = m[r, c] / diag
            if fac != 0.0:
                for k in range(c, n):
                    m[r, k] -= fac * m[c, k]
                x[r] -= fac * x[c]
    for c in range(n - 1, -1, -1):
        s = x[c]
        for k in range(c + 1, n):
            s -= m[c, k] * x[k]
        diag = m[c, c]
        if diag == 0.0:
            diag = 1e-300
        x[c] = s / diag
    return x


_solve = njit(**_JIT)(_solve_py)


def es_run_py(obj, quad, lin, offset, kinds, eps, lower, upper, f_opt, prec, budget, seed,
              sigma0, c_cov, normals):
    """Run the ES; ``normals`` (m x D) receives the filtered constraint vectors."""
    np.random.seed(seed)
    d = lower.shape[0]
    m = offset.shape[0]
    per = np.empty(m)
    width = upper - lower
    damping = 1.0 + d / 2.0
    c_path = 2.0 / (d + 2.0)
    c_p = 1.0 / 12.0
    p_target = 2.0 / 11.0
    c_c = 1.0 / (d + 2.0)
    beta = 0.1 / (d + 2.0)

    x = np.empty(d)
    for k in range(d):
        x[k] = lower[k] + np.random.random() * width[k]
    fx, px = evaluate_point(obj, quad, lin, offset, kinds, eps, x, per)
    count = 1
    if _meets(fx, px, f_opt, prec):
        return True, count, fx, px, count

    mean_width = 0.0
    for k in range(d):
        mean_width += width[k] / d
    sigma = sigma0 * mean_width
    a = np.eye(d)
    path = np.zeros(d)
    p_succ = p_target
    for j in range(m):
        for k in range(d):
            normals[j, k] = 0.0
    z = np.empty(d)
    az = np.empty(d)
    y = np.empty(d)
    violated = np.zeros(m, dtype=np.bool_)
    shrink = np.empty((d, d))

    while count < budget:
        for k in range(d):
            z[k] = np.random.standard_normal()
        for r in range(d):
            s = 0.0
            for k in range(d):
                s += a[r, k] * z[k]
            az[r] = s
            v = x[r] + sigma * s
            if v < lower[r]:
                v = lower[r]
            elif v > upper[r]:
                v = upper[r]
            y[r] = v
        fy, py = evaluate_point(obj, quad, lin, offset, kinds, eps, y, per)
        count += 1
        if _meets(fy, py, f_opt, prec):
            return True, count, fy, py, count

        if px == 0.0 and py > 0.0:
            # feasible parent, infeasible offspring: low-pass filter the
            # offending step per violated constraint and contract A along it
            n_viol = 0
            for j in range(m):
                violated[j] = per[j] > 0.0
                if violated[j]:
                    n_viol += 1
                    for k in range(d):
                        normals[j, k] = (1.0 - c_c) * normals[j, k] + c_c * az[k]
            for r in range(d):
                for k in range(d):
                    shrink[r, k] = 0.0
            a_norm = 0.0
            for r in range(d):
                for k in range(d):
                    a_norm += a[r, k] * a[r, k]
            for j in range(m):
                if violated[j]:
                    vv = 0.0
                    for k in range(d):
                        vv += normals[j, k] * normals[j, k]
                    w = _solve(a, normals[j])
                    ww = 0.0
                    for k in range(d):
                        ww += w[k] * w[k]
                    # stop contracting once A is ill-conditioned along this normal
                    if ww > 0.0 and math.isfinite(ww) and a_norm * ww <= MAX_CONDITION ** 2 * vv:
                        for r in range(d):
                            for k in range(d):
                                shrink[r, k] += normals[j, r] * w[k] / ww
            if n_viol > 0:
                for r in range(d):
                    for k in range(d):
                        a[r, k] -= beta / n_viol * shrink[r, k]
            continue

        if eps_less_equal(fy, py, fx, px, 0.0):
            for k in range(d):
                x[k] = y[k]
            fx, px = fy, py
            p_succ = (1.0 - c_p) * p_succ + c_p
            if py == 0.0:
                for k in range(d):
                    path[k] = (1.0 - c_path) * path[k] + math.sqrt(c_path * (2.0 - c_path)) * az[k]
                w = _solve(a, path)
                ww = 0.0
                for k in range(d):
                    ww += w[k] * w[k]
                if ww > 0.0 and math.isfinite(ww):
                    root = math.sqrt(1.0 - c_cov)
                    coef = root / ww * (math.sqrt(1.0 + c_cov * ww / (1.0 - c_cov)) - 1.0)
                    for r in range(d):
                        for k in range(d):
                            a[r, k] = root * a[r, k] + coef * path[r] * w[k]
        else:
            p_succ = (1.0 - c_p) * p_succ
        sigma *= math.exp((p_succ - p_target) / ((1.0 - p_target) * damping))
    return False, budget, fx, px, count


es_run = njit(**_JIT)(es_run_py)


# -- multi-swarm PSO ----------------------------------------------------------------

def partition_py(perm, n_swarms, swarm_size):
    """Sub-swarm id of every particle for a given particle permutation."""
    member = np.empty(n_swarms * swarm_size, dtype=np.int64)
    for s in range(n_swarms):
        for t in range(swarm_size):
            member[perm[s * swarm_size + t]] = s
    return member


partition = njit(**_JIT)(partition_py)


def pso_run_py(obj, quad, lin, offset, kinds, eps, lower, upper, f_opt, prec, budget, seed,
               n_swarms, swarm_size, inertia, c1, c2, regroup, init_at):
    np.random.seed(seed)
    d = lower.shape[0]
    m = offset.shape[0]
    n = n_swarms * swarm_size
    per = np.empty(m)
    width = upper - lower
    pos = np.empty((n, d))
    vel = np.zeros((n, d))
    pbest = np.empty((n, d))
    bf = np.empty(n)
    bp = np.empty(n)
    count = 0
    best_f = math.inf
    best_p = math.inf
    hit = False
    for i in range(n):
        for k in range(d):
            if init_at.shape[0] == d:
                pos[i, k] = init_at[k]
            else:
                pos[i, k] = lower[k] + np.random.random() * width[k]
            pbest[i, k] = pos[i, k]
        f, p = evaluate_point(obj, quad, lin, offset, kinds, eps, pos[i], per)
        count += 1
        bf[i] = f
        bp[i] = p
        if eps_less(f, p, best_f, best_p, 0.0):
            best_f, best_p = f, p
        if _meets(f, p, f_opt, prec):
            hit = True
    if hit:
        return True, count, best_f, best_p, count

    perm = np.random.permutation(n)
    member = partition(perm, n_swarms, swarm_size)
    leader = np.empty(n_swarms, dtype=np.int64)
    gen = 1
    while True:
        if gen % regroup == 0:
            perm = np.random.permutation(n)
            member = partition(perm, n_swarms, swarm_size)
        for s in range(n_swarms):
            leader[s] = -1
        for i in range(n):
            s = member[i]
            if leader[s] < 0 or eps_less(bf[i], bp[i], bf[leader[s]], bp[leader[s]], 0.0):
                leader[s] = i
        exhausted = False
        for i in range(n):
            li = leader[member[i]]
            for k in range(d):
                vmax = 0.5 * width[k]
                v = (inertia * vel[i, k] + c1 * np.random.random() * (pbest[i, k] - pos[i, k])
                     + c2 * np.random.random() * (pbest[li, k] - pos[i, k]))
                if v > vmax:
                    v = vmax
                elif v < -vmax:
                    v = -vmax
                xk = pos[i, k] + v
                if xk < lower[k]:
                    xk = lower[k]
                    v = 0.0
                elif xk > upper[k]:
                    xk = upper[k]
                    v = 0.0
                vel[i, k] = v
                pos[i, k] = xk
            if count >= budget:
                exhausted = True
                break
            f, p = evaluate_point(obj, quad, lin, offset, kinds, eps, pos[i], per)
            count += 1
            if _meets(f, p, f_opt, prec):
                hit = True
            if eps_less_equal(f, p, bf[i], bp[i], 0.0):
                for k in range(d):
                    pbest[i, k] = pos[i, k]
                bf[i] = f
                bp[i] = p
                if eps_less(f, p, best_f, best_p, 0.0):
                    best_f, best_p = f, p
        if exhausted:
            return False, budget, best_f, best_p, count
        if hit:
            return True, count, best_f, best_p, count
        gen += 1


pso_run = njit(**_JIT)(pso_run_py)
