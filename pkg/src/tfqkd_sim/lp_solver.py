"""
Bounded-variable simplex for small dense linear programs.

Solves

    maximise   c . x
    subject to A x = b,  lower <= x <= upper

with finite lower bounds and possibly infinite upper bounds. Nonbasic
variables sit at one of their bounds, so box constraints never enter the
tableau. Phase one drives a set of artificial variables to zero; the phase
one basis is kept and reused for every objective passed to ``maximize``.
Entering and leaving choices follow Bland's rule (smallest index) so
degenerate problems terminate.

:docformat: reStructuredText
"""
import logging
from collections import namedtuple

import numpy as np

from tfqkd_sim.core import EstimationFailure

logger = logging.getLogger(__name__)

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2

REDUCED_COST_TOL = 1e-12
PIVOT_TOL = 1e-300
RATIO_TOL = 1e-18

LpResult = namedtuple('LpResult', ['x', 'objective', 'iterations'])


class LpInfeasibleError(EstimationFailure):
    """The constraint set is empty; ``constraint`` names the worst violated row."""

    def __init__(self, constraint, residual):
        self.constraint = constraint
        self.residual = residual
        super(LpInfeasibleError, self).__init__(
            'Infeasible constraints: {} cannot be met (residual {:.3e})'.format(
                constraint, residual))


class LpUnboundedError(EstimationFailure):
    pass


class BoundedSimplex(object):

    def __init__(self, a_eq, b_eq, lower, upper, row_names=None, max_iter=20000):
        a = np.atleast_2d(np.asarray(a_eq, dtype=float))
        b = np.asarray(b_eq, dtype=float).ravel()
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        m, n = a.shape
        if b.size != m or lower.size != n or upper.size != n:
            raise ValueError('LP dimensions do not agree: A {}x{}, b {}, bounds {}/{}'.format(
                m, n, b.size, lower.size, upper.size))
        if not np.all(np.isfinite(lower)) or np.any(upper < lower):
            raise ValueError('Every variable needs a finite lower bound below its upper bound')

        self.m = m
        self.n = n
        self.row_names = list(row_names) if row_names is not None \
            else ['row {}'.format(i) for i in range(m)]
        self.max_iter = max_iter
        self.feasibility_tol = 1e-12 * max(float(np.max(np.abs(b))) if m else 0.0, 0.0) + 1e-15

        residual = b - a.dot(lower)
        sign = np.where(residual < 0, -1.0, 1.0)
        # Artificial variables take the initial residual of each row
        self._tableau = np.hstack([a * sign[:, None], np.eye(m)])
        self._lower = np.concatenate([lower, np.zeros(m)])
        self._upper = np.concatenate([upper, np.full(m, np.inf)])
        self._x = np.concatenate([lower, np.abs(residual)])
        self._basis = np.arange(n, n + m)
        self._state = np.full(n + m, AT_LOWER, dtype=int)
        self._state[self._basis] = BASIC
        self._phase_one_done = False

    def _iterate(self, cost, tableau, x, basis, state, lower, upper):
        m = self.m
        for iteration in range(self.max_iter):
            reduced = cost - cost[basis].dot(tableau)
            eligible = ((state == AT_LOWER) & (reduced > REDUCED_COST_TOL) & (upper > lower)) \
                | ((state == AT_UPPER) & (reduced < -REDUCED_COST_TOL))
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return iteration
            enter = candidates[0]
            direction = 1.0 if state[enter] == AT_LOWER else -1.0
            column = direction * tableau[:, enter]

            step = upper[enter] - lower[enter]
            leave, leave_to = -1, None
            for i in range(m):
                coeff = column[i]
                if abs(coeff) <= PIVOT_TOL:
                    continue
                var = basis[i]
                if coeff > 0:
                    ratio, target = (x[var] - lower[var]) / coeff, AT_LOWER
                else:
                    ratio, target = (upper[var] - x[var]) / -coeff, AT_UPPER
                ratio = max(ratio, 0.0)
                if ratio < step - RATIO_TOL or (abs(ratio - step) <= RATIO_TOL
                                                and leave >= 0 and var < basis[leave]):
                    step, leave, leave_to = ratio, i, target
            if not np.isfinite(step):
                raise LpUnboundedError('Objective unbounded along variable {}'.format(enter))

            x[basis] -= step * column
            x[enter] += direction * step
            if leave < 0:
                # Bound flip, the basis is unchanged
                state[enter] = AT_UPPER if state[enter] == AT_LOWER else AT_LOWER
                x[enter] = upper[enter] if state[enter] == AT_UPPER else lower[enter]
                continue

            out = basis[leave]
            x[out] = lower[out] if leave_to == AT_LOWER else upper[out]
            state[out] = leave_to
            pivot = tableau[leave, enter]
            tableau[leave] /= pivot
            factors = tableau[:, enter].copy()
            factors[leave] = 0.0
            tableau -= np.outer(factors, tableau[leave])
            basis[leave] = enter
            state[enter] = BASIC
        raise EstimationFailure('Simplex did not converge in {} iterations'.format(self.max_iter))

    def _phase_one(self):
        n, m = self.n, self.m
        cost = np.zeros(n + m)
        cost[n:] = -1.0
        iterations = self._iterate(cost, self._tableau, self._x, self._basis,
                                   self._state, self._lower, self._upper)
        artificial = self._x[n:]
        if artificial.sum() > self.feasibility_tol:
            worst = int(np.argmax(artificial))
            raise LpInfeasibleError(self.row_names[worst], float(artificial[worst]))
        self._upper[n:] = 0.0
        self._x[n:] = np.clip(self._x[n:], 0.0, 0.0)
        self._phase_one_done = True
        logger.debug('Phase one feasible after {} iterations'.format(iterations))

    def check_feasible(self):
        if not self._phase_one_done:
            self._phase_one()

    def maximize(self, c):
        """
        Maximise ``c . x`` from the stored feasible basis.

        :param c: objective coefficients for the n structural variables
        :rtype: LpResult
        :raises LpInfeasibleError: when phase one leaves a positive residual
        """
        self.check_feasible()
        cost = np.concatenate([np.asarray(c, dtype=float).ravel(), np.zeros(self.m)])
        tableau = self._tableau.copy()
        x = self._x.copy()
        basis = self._basis.copy()
        state = self._state.copy()
        iterations = self._iterate(cost, tableau, x, basis, state, self._lower, self._upper)
        values = x[:self.n]
        return LpResult(x=values, objective=float(cost[:self.n].dot(values)),
                        iterations=iterations)


def solve_bounded_lp(c, a_eq, b_eq, lower, upper, row_names=None):
    """One-shot helper: maximise c.x over {A x = b, lower <= x <= upper}."""
    return BoundedSimplex(a_eq, b_eq, lower, upper, row_names=row_names).maximize(c)
