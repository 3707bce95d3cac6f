"""Test-only utilities: an evaluation-counting wrapper and plain baseline solvers
used as independent oracles for the portfolio implementations."""

import numpy as np

from copselect import _kernels
from copselect.cop import evaluate_objective, violation


class CountingEvaluator:
    """Wraps the kernel point evaluation, counting calls and recording points."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.points = []

    def __call__(self, obj, quad, lin, offset, kinds, eps, x, per):
        self.calls += 1
        self.points.append(np.array(x, copy=True))
        return self.inner(obj, quad, lin, offset, kinds, eps, x, per)


def install_counter(monkeypatch):
    counter = CountingEvaluator(_kernels.evaluate_point_py)
    monkeypatch.setattr(_kernels, "evaluate_point", counter)
    return counter


def _feasible_f(instance, x):
    phi, _ = violation(instance, x)
    return evaluate_objective(instance, x), phi


def plain_de(instance, budget, seed, n_pop=20, f=0.5, cr=0.9, precision=1e-4):
    """Textbook DE/rand/1/bin with greedy selection on f; returns evaluations used or None."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(instance.space.lower), np.asarray(instance.space.upper)
    d = len(lo)
    pop = rng.uniform(lo, hi, (n_pop, d))
    fit = np.array([evaluate_objective(instance, x) for x in pop])
    used = n_pop
    while used < budget:
        for i in range(n_pop):
            r1, r2, r3 = rng.choice([j for j in range(n_pop) if j != i], 3, replace=False)
            mutant = np.clip(pop[r1] + f * (pop[r2] - pop[r3]), lo, hi)
            mask = rng.random(d) < cr
            mask[rng.integers(d)] = True
            trial = np.where(mask, mutant, pop[i])
            ft = evaluate_objective(instance, trial)
            used += 1
            if ft <= fit[i]:
                pop[i], fit[i] = trial, ft
            if ft <= precision:
                return used
    return None


def plain_es(instance, budget, seed, sigma=3.0, precision=1e-4):
    """Isotropic (1+1)-ES with the 1/5th success rule."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(instance.space.lower), np.asarray(instance.space.upper)
    d = len(lo)
    x = rng.uniform(lo, hi)
    fx = evaluate_objective(instance, x)
    for used in range(2, budget + 1):
        y = np.clip(x + sigma * rng.standard_normal(d), lo, hi)
        fy = evaluate_objective(instance, y)
        if fy <= fx:
            x, fx = y, fy
            sigma *= np.exp(0.8 / d)
        else:
            sigma *= np.exp(-0.2 / d)
        if fx <= precision:
            return used
    return None


def plain_gbest_pso(instance, budget, seed, n=20, w=0.7298, c=1.49618, precision=1e-4):
    """Global-best PSO with velocity clamping."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(instance.space.lower), np.asarray(instance.space.upper)
    d = len(lo)
    vmax = 0.5 * (hi - lo)
    x = rng.uniform(lo, hi, (n, d))
    v = np.zeros((n, d))
    pb = x.copy()
    pf = np.array([evaluate_objective(instance, p) for p in x])
    used = n
    while used < budget:
        g = pb[np.argmin(pf)]
        v = w * v + c * rng.random((n, d)) * (pb - x) + c * rng.random((n, d)) * (g - x)
        v = np.clip(v, -vmax, vmax)
        x = np.clip(x + v, lo, hi)
        for i in range(n):
            fi = evaluate_objective(instance, x[i])
            used += 1
            if fi < pf[i]:
                pb[i], pf[i] = x[i].copy(), fi
            if fi <= precision:
                return used
    return None
