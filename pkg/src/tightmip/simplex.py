"""Bounded-variable revised simplex over sparse standard form.

The engine converts a model into equality form ``A z = b, l <= z <= u``
(one slack per kept row; singleton rows are folded into bounds first)
and keeps an explicit dense basis inverse that is updated by rank-one
pivots and refactorized periodically.  Three iteration modes share the
pivot bookkeeping:

* composite phase 1: minimizes total bound violation of the basic
  variables without artificial columns, so it doubles as a feasibility
  certificate,
* primal phase 2: Dantzig pricing on maintained reduced costs,
* dual simplex: used to re-solve after bound changes (branching) and
  after activating rows, where the current basis stays dual feasible.

Rows can be marked lazy by constraint tag prefix.  Lazy rows start
inactive; whenever the active problem reaches an optimum the engine
checks them, activates any violated ones with their slacks basic, and
continues with dual iterations.  The returned point always satisfies
every row of the original model.

Anti-cycling follows the usual pragmatic scheme: Dantzig pricing with
a switch to Bland's rule after 50 consecutive degenerate pivots, and
back once a real step is made.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.blas import dger

from .model import LE, GE, EQ, MAX, MilpModel

INF = math.inf

# column statuses
BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
FREE_NB = 3
INACTIVE = 4

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
CUTOFF = "cutoff"  # dual re-solve stopped early: optimum provably >= limit

# tolerances
PFEAS = 1e-7         # primal bound feasibility
DTOL = 1e-7          # reduced cost eligibility
PIV_EPS = 1e-9       # direction / pivot significance
DEGEN_STEP = 1e-10   # step considered degenerate
BLAND_AFTER = 50     # consecutive degenerate pivots before Bland's rule
REFACTOR_EVERY = 128


class SolverFailure(RuntimeError):
    """Numerical breakdown that survived the anti-cycling safeguards."""


@dataclass
class LpOutcome:
    status: str
    objective: float
    point: object  # ndarray or None
    iterations: int


@dataclass
class BasisState:
    """Exportable engine state for warm starts across related solves."""

    active_rows: tuple
    basis: tuple
    vstatus: bytes


class StandardForm:
    """Equality-form data shared by the public entry points."""

    def __init__(self, n_struct, lower, upper, c_min, rows, maximize, fold_infeasible):
        self.n_struct = n_struct
        self.lower = lower
        self.upper = upper
        self.c_min = c_min
        self.rows = rows  # list of (idx array, val array, sense, rhs, tag)
        self.maximize = maximize
        self.fold_infeasible = fold_infeasible


def build_standard_form(model: MilpModel) -> StandardForm:
    """Fold singleton rows into bounds and collect the remaining rows."""
    n = model.num_vars
    lower, upper = model.bounds_arrays()
    c = model.objective_vector()
    maximize = model.sense == MAX
    if maximize:
        c = -c
    rows = []
    infeasible = False
    for con in model.constraints:
        if len(con.coeffs) == 1:
            (i, a), rhs = con.coeffs[0], con.rhs
            if con.sense in (LE, EQ):
                if a > 0:
                    upper[i] = min(upper[i], rhs / a)
                else:
                    lower[i] = max(lower[i], rhs / a)
            if con.sense in (GE, EQ):
                if a > 0:
                    lower[i] = max(lower[i], rhs / a)
                else:
                    upper[i] = min(upper[i], rhs / a)
            continue
        idx = np.array([i for i, _ in con.coeffs], dtype=np.int64)
        val = np.array([v for _, v in con.coeffs], dtype=float)
        rows.append((idx, val, con.sense, float(con.rhs), con.tag))
    if np.any(lower > upper + 1e-9):
        infeasible = True
    return StandardForm(n, lower, upper, c, rows, maximize, infeasible)


class LpEngine:
    def __init__(self, sf: StandardForm, lazy_tag_prefixes=()):
        self.sf = sf
        self.n = sf.n_struct
        self.m_total = len(sf.rows)
        self.ncol = self.n + self.m_total

        lower = np.empty(self.ncol)
        upper = np.empty(self.ncol)
        lower[: self.n] = sf.lower
        upper[: self.n] = sf.upper
        self.b_full = np.empty(self.m_total)
        lazy = np.zeros(self.m_total, dtype=bool)
        entries_r, entries_c, entries_v = [], [], []
        for k, (idx, val, sense, rhs, tag) in enumerate(sf.rows):
            entries_r.append(np.full(idx.shape, k, dtype=np.int64))
            entries_c.append(idx)
            entries_v.append(val)
            self.b_full[k] = rhs
            j = self.n + k
            if sense == LE:
                lower[j], upper[j] = 0.0, INF
            elif sense == GE:
                lower[j], upper[j] = -INF, 0.0
            else:
                lower[j], upper[j] = 0.0, 0.0
            if tag and any(tag.startswith(p) for p in lazy_tag_prefixes):
                lazy[k] = True
        # slack identity entries
        entries_r.append(np.arange(self.m_total, dtype=np.int64))
        entries_c.append(np.arange(self.n, self.ncol, dtype=np.int64))
        entries_v.append(np.ones(self.m_total))
        if self.m_total:
            rr = np.concatenate(entries_r)
            cc = np.concatenate(entries_c)
            vv = np.concatenate(entries_v)
        else:
            rr = cc = np.zeros(0, dtype=np.int64)
            vv = np.zeros(0)
        self.A_full = sp.csr_matrix((vv, (rr, cc)), shape=(self.m_total, self.ncol))

        self.lower = lower
        self.upper = upper
        self.root_lower = lower.copy()
        self.root_upper = upper.copy()
        self.c = np.zeros(self.ncol)
        self.c[: self.n] = sf.c_min

        self.lazy = lazy
        self._sense_le = np.array([r[2] == LE for r in sf.rows], dtype=bool)
        self._sense_ge = np.array([r[2] == GE for r in sf.rows], dtype=bool)
        self._sense_eq = np.array([r[2] == EQ for r in sf.rows], dtype=bool)
        self.active_rows = [k for k in range(self.m_total) if not lazy[k]]
        self._active_set = set(self.active_rows)
        self._off_root = set()
        self._rebuild_active()

        self.vstatus = np.full(self.ncol, INACTIVE, dtype=np.int8)
        self.basis = np.zeros(0, dtype=np.int64)
        self.Binv = np.zeros((0, 0), order="F")
        self.xB = np.zeros(0)
        self.d = np.zeros(self.ncol)
        self.iters = 0
        self.call_budget = 150000
        self._budget_end = math.inf
        self._bland = False
        self._degen_streak = 0
        self._pivots_since_refactor = 0
        self._idle = {}  # active lazy row -> consecutive non-binding optima

    # ----- active set plumbing -------------------------------------------

    def _rebuild_active(self):
        rows = self.active_rows
        if rows:
            self.A_act = self.A_full[rows, :].tocsc()
        else:
            self.A_act = sp.csc_matrix((0, self.ncol))
        self.AT = self.A_act.T.tocsr()
        self.b_act = self.b_full[rows] if rows else np.zeros(0)
        self.m_act = len(rows)
        inact = self._inactive_rows()
        self._rows_inact = np.array(inact, dtype=np.int64)
        self.A_inact = self.A_full[inact, :] if inact else None

    def _inactive_rows(self):
        return [k for k in range(self.m_total) if k not in self._active_set]

    # ----- basis and recomputation ---------------------------------------

    def slack_start(self):
        """All-slack basis; structurals rest at their nearest finite bound."""
        self.vstatus[:] = INACTIVE
        for j in range(self.n):
            if self.lower[j] > -INF:
                self.vstatus[j] = AT_LOWER
            elif self.upper[j] < INF:
                self.vstatus[j] = AT_UPPER
            else:
                self.vstatus[j] = FREE_NB
        self.basis = np.array([self.n + k for k in self.active_rows], dtype=np.int64)
        self.vstatus[self.basis] = BASIC
        self.Binv = np.eye(self.m_act, order="F")
        self._recompute_xB()
        self._recompute_d()
        self._pivots_since_refactor = 0
        self._idle.clear()

    def _nonbasic_values(self):
        """Full-length vector with nonbasic vars at their rest values, basics 0."""
        x = np.zeros(self.ncol)
        st = self.vstatus
        lo_m = st == AT_LOWER
        up_m = st == AT_UPPER
        x[lo_m] = self.lower[lo_m]
        x[up_m] = self.upper[up_m]
        return x

    def _recompute_xB(self):
        xn = self._nonbasic_values()
        rhs = self.b_act - self.A_act @ xn
        self.xB = self.Binv @ rhs if self.m_act else np.zeros(0)

    def _recompute_d(self):
        if self.m_act:
            y = self.c[self.basis] @ self.Binv
            self.d = self.c - (self.AT @ y)
        else:
            self.d = self.c.copy()
        self.d[self.vstatus == BASIC] = 0.0

    def refactor(self):
        if self.m_act == 0:
            self.Binv = np.zeros((0, 0), order="F")
            self._recompute_xB()
            self._recompute_d()
            return
        # sparse LU beats a dense inverse here by a wide margin; the
        # explicit inverse is then recovered with one multi-rhs solve
        B = self.A_act[:, self.basis].tocsc()
        try:
            lu = spla.splu(B, permc_spec="COLAMD")
            self.Binv = np.asfortranarray(lu.solve(np.eye(self.m_act)))
        except RuntimeError as exc:
            raise SolverFailure("singular basis during refactorization") from exc
        if not np.isfinite(self.Binv).all():
            raise SolverFailure("singular basis during refactorization")
        self._recompute_xB()
        self._recompute_d()
        self._pivots_since_refactor = 0

    def x_full(self):
        x = self._nonbasic_values()
        x[self.basis] = self.xB
        return x

    def point(self):
        return self.x_full()[: self.n]

    def objective(self) -> float:
        return float(self.c @ self.x_full())

    # ----- shared pivot mechanics ----------------------------------------

    def _ftran(self, q):
        a0, a1 = self.A_act.indptr[q], self.A_act.indptr[q + 1]
        rows = self.A_act.indices[a0:a1]
        vals = self.A_act.data[a0:a1]
        if rows.size == 0:
            return np.zeros(self.m_act)
        return self.Binv[:, rows] @ vals

    def _pivot_row(self, r):
        return self.AT @ self.Binv[r]

    def _apply_pivot(self, q, r, w, x_q_new, leave_status, alpha=None):
        """Replace basis slot r by column q.  xB must already hold the stepped
        values for all slots except r (slot r is overwritten)."""
        wr = w[r]
        if abs(wr) < 1e-11:
            raise SolverFailure("pivot element vanished")
        if alpha is not None:
            t = self.d[q] / alpha[q]
            self.d -= t * alpha
            self.d[q] = 0.0
            self.d[self.basis[r]] = -t
        rrow = self.Binv[r].copy()
        factor = w / wr
        factor[r] = 0.0
        # in-place rank-one update; Binv is kept Fortran-ordered for this
        self.Binv = dger(-1.0, factor, rrow, a=self.Binv, overwrite_a=1)
        self.Binv[r] = rrow / wr
        leaving = self.basis[r]
        self.vstatus[leaving] = leave_status
        self.vstatus[q] = BASIC
        self.basis[r] = q
        self.xB[r] = x_q_new
        self.iters += 1
        self._pivots_since_refactor += 1
        if self._pivots_since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def _track_degeneracy(self, step):
        if step <= DEGEN_STEP:
            self._degen_streak += 1
            if self._degen_streak >= BLAND_AFTER:
                self._bland = True
        else:
            self._degen_streak = 0
            self._bland = False

    def _entering_direction(self, q, dval):
        st = self.vstatus[q]
        if st == AT_LOWER:
            return 1.0
        if st == AT_UPPER:
            return -1.0
        return 1.0 if dval < 0 else -1.0

    # ----- phase 2 ---------------------------------------------------------

    def _phase2(self):
        while True:
            if self.iters >= self._budget_end:
                raise SolverFailure("iteration limit in phase 2")
            st = self.vstatus
            d = self.d
            viol = np.full(self.ncol, -INF)
            m_lo = st == AT_LOWER
            m_up = st == AT_UPPER
            m_fr = st == FREE_NB
            viol[m_lo] = -d[m_lo]
            viol[m_up] = d[m_up]
            viol[m_fr] = np.abs(d[m_fr])
            if self._bland:
                elig = np.flatnonzero(viol > DTOL)
                if elig.size == 0:
                    return OPTIMAL
                q = int(elig[0])
            else:
                q = int(np.argmax(viol))
                if viol[q] <= DTOL:
                    return OPTIMAL
            res = self._primal_step(q, self.d[q], maintain_d=True)
            if res == UNBOUNDED:
                return UNBOUNDED

    def _primal_step(self, q, dval, maintain_d, phase1_sides=None):
        """One bounded ratio-test step for entering column q.

        phase1_sides, when given, is (below, above) boolean masks over the
        basic slots; infeasible basics then stop the step at their violated
        bound instead of their nearest one.
        """
        sgn = self._entering_direction(q, dval)
        w = self._ftran(q)
        delta = -sgn * w
        lB = self.lower[self.basis]
        uB = self.upper[self.basis]
        xB = self.xB
        m = self.m_act

        cand = np.full(m, INF)
        side = np.zeros(m, dtype=np.int8)  # status the leaving var would take
        up_m = delta > PIV_EPS
        dn_m = delta < -PIV_EPS
        if phase1_sides is None:
            sel = up_m & (uB < INF)
            cand[sel] = (uB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_UPPER
            sel = dn_m & (lB > -INF)
            cand[sel] = (lB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_LOWER
        else:
            below, above = phase1_sides
            feas = ~(below | above)
            sel = feas & up_m & (uB < INF)
            cand[sel] = (uB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_UPPER
            sel = feas & dn_m & (lB > -INF)
            cand[sel] = (lB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_LOWER
            sel = below & up_m
            cand[sel] = (lB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_LOWER
            sel = above & dn_m
            cand[sel] = (uB[sel] - xB[sel]) / delta[sel]
            side[sel] = AT_UPPER
        np.maximum(cand, 0.0, out=cand)

        theta_bound = float(cand.min()) if m else INF
        if self.upper[q] < INF and self.lower[q] > -INF:
            theta_flip = self.upper[q] - self.lower[q]
        else:
            theta_flip = INF
        theta = min(theta_bound, theta_flip)
        if theta == INF:
            return UNBOUNDED

        if theta_flip <= theta_bound:
            self.xB += theta_flip * delta
            self.vstatus[q] = AT_UPPER if self.vstatus[q] == AT_LOWER else AT_LOWER
            self.iters += 1
            self._track_degeneracy(theta_flip)
            return "flip"

        near = np.flatnonzero(cand <= theta_bound + 1e-12)
        if self._bland:
            r = int(near[np.argmin(self.basis[near])])
        else:
            r = int(near[np.argmax(np.abs(delta[near]))])
        alpha = self._pivot_row(r) if maintain_d else None
        self.xB += theta_bound * delta
        x_q_new = self._rest_value(q) + sgn * theta_bound
        self._apply_pivot(q, r, w, x_q_new, int(side[r]), alpha=alpha)
        self._track_degeneracy(theta_bound)
        return "pivot"

    def _rest_value(self, q):
        st = self.vstatus[q]
        if st == AT_LOWER:
            return self.lower[q]
        if st == AT_UPPER:
            return self.upper[q]
        return 0.0

    # ----- phase 1 ---------------------------------------------------------

    def _infeasibility_masks(self):
        lB = self.lower[self.basis]
        uB = self.upper[self.basis]
        below = self.xB < lB - PFEAS
        above = self.xB > uB + PFEAS
        return below, above, lB, uB

    def _phase1(self):
        stall = 0
        while True:
            if self.iters >= self._budget_end:
                raise SolverFailure("iteration limit in phase 1")
            below, above, lB, uB = self._infeasibility_masks()
            if not below.any() and not above.any():
                return OPTIMAL
            c1B = np.where(below, -1.0, np.where(above, 1.0, 0.0))
            y1 = c1B @ self.Binv
            d1 = -(self.AT @ y1)
            st = self.vstatus
            viol = np.full(self.ncol, -INF)
            m_lo = st == AT_LOWER
            m_up = st == AT_UPPER
            m_fr = st == FREE_NB
            viol[m_lo] = -d1[m_lo]
            viol[m_up] = d1[m_up]
            viol[m_fr] = np.abs(d1[m_fr])
            if self._bland:
                elig = np.flatnonzero(viol > DTOL)
                q = int(elig[0]) if elig.size else -1
            else:
                q = int(np.argmax(viol))
                if viol[q] <= DTOL:
                    q = -1
            if q < 0:
                # at the phase-1 minimum with residual infeasibility
                return INFEASIBLE
            res = self._primal_step(q, d1[q], maintain_d=False, phase1_sides=(below, above))
            if res == UNBOUNDED:
                stall += 1
                if stall > 2:
                    raise SolverFailure("unbounded phase-1 direction")
                self.refactor()
            else:
                stall = 0

    # ----- dual simplex ----------------------------------------------------

    def dual_feasible(self, tol=1e-6):
        st = self.vstatus
        d = self.d
        bad = ((st == AT_LOWER) & (d < -tol)) | ((st == AT_UPPER) & (d > tol))
        bad |= (st == FREE_NB) & (np.abs(d) > tol)
        return not bool(bad.any())

    def _dual(self, obj_limit=INF):
        retries = 0
        since_check = 0
        while True:
            if self.iters >= self._budget_end:
                raise SolverFailure("iteration limit in dual simplex")
            if obj_limit < INF and since_check <= 0:
                # every dual feasible basis bounds the optimum from below,
                # so crossing the limit already certifies the re-solve
                if self.objective() >= obj_limit:
                    return CUTOFF
                since_check = 8
            since_check -= 1
            lB = self.lower[self.basis]
            uB = self.upper[self.basis]
            v_lo = lB - self.xB
            v_up = self.xB - uB
            v = np.maximum(v_lo, v_up)
            if self.m_act == 0 or v.max(initial=-INF) <= PFEAS:
                return OPTIMAL
            if self._bland:
                viol_slots = np.flatnonzero(v > PFEAS)
                r = int(viol_slots[np.argmin(self.basis[viol_slots])])
            else:
                r = int(np.argmax(v))
            below = v_lo[r] >= v_up[r]
            alpha = self._pivot_row(r)
            st = self.vstatus
            if below:
                elig = ((st == AT_LOWER) & (alpha < -PIV_EPS)) | (
                    (st == AT_UPPER) & (alpha > PIV_EPS)
                )
            else:
                elig = ((st == AT_LOWER) & (alpha > PIV_EPS)) | (
                    (st == AT_UPPER) & (alpha < -PIV_EPS)
                )
            elig |= (st == FREE_NB) & (np.abs(alpha) > PIV_EPS)
            idx = np.flatnonzero(elig)
            if idx.size == 0:
                return INFEASIBLE
            ratios = np.abs(self.d[idx]) / np.abs(alpha[idx])
            if self._bland:
                q = int(idx[np.flatnonzero(ratios <= ratios.min() + 1e-12)[0]])
            else:
                near = np.flatnonzero(ratios <= ratios.min() + 1e-9)
                q = int(idx[near[np.argmax(np.abs(alpha[idx][near]))]])
            w = self._ftran(q)
            if abs(w[r]) < 1e-9:
                # pivots this small are usually artifacts of a degraded
                # inverse; an exact refactorization re-picks cleanly
                retries += 1
                if retries > 3:
                    raise SolverFailure("dual pivot element vanished")
                self.refactor()
                continue
            retries = 0
            target = lB[r] if below else uB[r]
            step_q = (target - self.xB[r]) / (-alpha[q])
            x_q_new = self._rest_value(q) + step_q
            dual_step = abs(self.d[q] / alpha[q])
            self.xB -= step_q * w
            self._apply_pivot(q, r, w, x_q_new, AT_LOWER if below else AT_UPPER, alpha=alpha)
            self._track_degeneracy(dual_step)

    # ----- lazy rows -------------------------------------------------------

    def _violated_inactive(self):
        if self.A_inact is None:
            return []
        x = self.x_full()
        rows = self._rows_inact
        acts = self.A_inact @ x
        rhs = self.b_full[rows]
        bad = (self._sense_le[rows] & (acts > rhs + PFEAS))
        bad |= self._sense_ge[rows] & (acts < rhs - PFEAS)
        bad |= self._sense_eq[rows] & (np.abs(acts - rhs) > PFEAS)
        return [int(k) for k in rows[bad]]

    def activate_rows(self, rows):
        """Add rows with their slacks basic.

        The new basis is the old one bordered by identity slack columns,
        so its inverse extends in block form without a refactorization:
        the new off-diagonal block is -C @ Binv with C the new rows'
        coefficients on the old basic columns.
        """
        if not rows:
            return
        rows = list(rows)
        if self.basis.size < self.m_act:
            # no factorization yet; widen the active set and let the
            # upcoming start build the basis over all of it
            self.active_rows = self.active_rows + rows
            self._active_set.update(rows)
            self._rebuild_active()
            for r in rows:
                self._idle.pop(r, None)
            return
        k = len(rows)
        old_m = self.m_act
        add_cols = np.array([self.n + r for r in rows], dtype=np.int64)
        a_new = self.A_full[rows, :]
        x_old = self.x_full()
        new_vals = self.b_full[rows] - a_new @ x_old
        grown = np.zeros((old_m + k, old_m + k), order="F")
        if old_m:
            c_blk = a_new[:, self.basis].toarray()
            grown[:old_m, :old_m] = self.Binv
            grown[old_m:, :old_m] = -(c_blk @ self.Binv)
        grown[old_m:, old_m:] = np.eye(k)
        self.Binv = grown
        self.active_rows = self.active_rows + rows
        self._active_set.update(rows)
        self._rebuild_active()
        self.basis = np.concatenate([self.basis, add_cols])
        self.vstatus[add_cols] = BASIC
        self.xB = np.concatenate([self.xB, new_vals])
        # the new rows' duals are zero (slack basic), so d is unchanged
        for r in rows:
            self._idle.pop(r, None)

    def ensure_active(self, rows):
        have = set(self.active_rows)
        need = [k for k in rows if k not in have]
        if need:
            self.activate_rows(need)

    def note_idle_rows(self):
        """At an optimum, bump streaks of active lazy rows that are slack.

        A row counts as idle when its slack is basic and strictly inside
        its bounds; binding or nonbasic-slack rows reset to zero.
        """
        slot_of = {int(c): i for i, c in enumerate(self.basis)}
        for row in self.active_rows:
            if not self.lazy[row]:
                continue
            j = self.n + row
            slot = slot_of.get(j)
            idle = False
            if slot is not None:
                v = self.xB[slot]
                idle = v > self.lower[j] + 1e-6 and v < self.upper[j] - 1e-6
            self._idle[row] = self._idle.get(row, 0) + 1 if idle else 0

    def shed_idle_rows(self, min_idle=1):
        """Deactivate lazy rows that stayed non-binding for min_idle optima.

        Dropping rows keeps the active problem a relaxation; anything that
        becomes violated later is pulled back in by the lazy settlement.
        Returns the number of rows dropped.
        """
        drop = [
            r
            for r, streak in self._idle.items()
            if streak >= min_idle
            and r in self._active_set
            and self.vstatus[self.n + r] == BASIC
        ]
        if not drop:
            return 0
        drop_set = set(drop)
        slot_of = {int(c): i for i, c in enumerate(self.basis)}
        slots = np.array(sorted(slot_of[self.n + r] for r in drop), dtype=np.int64)
        positions = np.array(
            [i for i, r in enumerate(self.active_rows) if r in drop_set], dtype=np.int64
        )
        # with identity slack columns on those rows, deleting their basis
        # slots (rows of Binv) and row positions (columns of Binv) leaves
        # exactly the inverse of the reduced basis
        keep_s = np.delete(np.arange(self.m_act), slots)
        keep_p = np.delete(np.arange(self.m_act), positions)
        self.Binv = np.asfortranarray(self.Binv[np.ix_(keep_s, keep_p)])
        self.xB = self.xB[keep_s]
        self.basis = self.basis[keep_s]
        for r in drop:
            self.vstatus[self.n + r] = INACTIVE
            self.d[self.n + r] = 0.0
            self._idle.pop(r, None)
        self.active_rows = [r for r in self.active_rows if r not in drop_set]
        self._active_set.difference_update(drop_set)
        self._rebuild_active()
        return len(drop)

    def _settle_lazy(self, status, obj_limit=INF):
        """After an optimal active-problem solve, pull in violated lazy rows."""
        while status == OPTIMAL:
            bad = self._violated_inactive()
            if not bad:
                return OPTIMAL
            self.activate_rows(bad)
            status = self._dual(obj_limit)
            if status == INFEASIBLE:
                return INFEASIBLE
        return status

    # ----- top-level drivers ----------------------------------------------

    def solve_primal(self):
        """Phase 1 + phase 2 + lazy settlement from the current basis."""
        self._bland = False
        self._degen_streak = 0
        self._budget_end = self.iters + self.call_budget
        st = self._phase1()
        if st == INFEASIBLE:
            return INFEASIBLE
        self._recompute_d()
        st = self._phase2()
        if st == UNBOUNDED:
            inact = self._inactive_rows()
            if not inact:
                return UNBOUNDED
            self.activate_rows(inact)
            return self.solve_primal()
        st = self._settle_lazy(st)
        if st == OPTIMAL:
            self._polish()
        return st

    def solve_dual(self, obj_limit=INF):
        """Dual re-solve after bound changes; falls back to primal phases.

        With a finite ``obj_limit`` the dual loop stops as soon as its
        running bound proves the optimum cannot stay below the limit and
        reports CUTOFF; the basis is then mid-solve but dual feasible.
        """
        self._bland = False
        self._degen_streak = 0
        self._budget_end = self.iters + self.call_budget
        if not self.dual_feasible():
            st = self.solve_primal()
            if st == OPTIMAL and obj_limit < INF and self.objective() >= obj_limit:
                return CUTOFF
            return st
        st = self._dual(obj_limit)
        if st == INFEASIBLE or st == CUTOFF:
            return st
        st = self._settle_lazy(st, obj_limit)
        if st == OPTIMAL:
            self._polish()
        return st

    def _polish(self):
        """Re-derive xB and d at claimed optimality and repair small drift.

        A full refactorization is only done when a check actually fails
        or many pivots have accumulated; the scheduled refactor cadence
        bounds the drift of Binv itself between these points.
        """
        if self._pivots_since_refactor >= REFACTOR_EVERY // 2:
            self.refactor()
        else:
            self._recompute_xB()
            self._recompute_d()
        for _ in range(4):
            below, above, _, _ = self._infeasibility_masks()
            if below.any() or above.any():
                self.refactor()
                if self._phase1() != OPTIMAL:
                    raise SolverFailure("feasibility lost while polishing")
                self._recompute_d()
                continue
            if not self.dual_feasible(tol=DTOL):
                self.refactor()
                if self._phase2() != OPTIMAL:
                    raise SolverFailure("optimality lost while polishing")
                continue
            bad = self._violated_inactive()
            if bad:
                self.activate_rows(bad)
                if self._dual() != OPTIMAL:
                    raise SolverFailure("lazy rows unsettled while polishing")
                continue
            return
        raise SolverFailure("polishing did not converge")

    # ----- bounds (branching) ---------------------------------------------

    def set_bound(self, j, lo, up):
        """Change bounds of structural var j, keeping basic values consistent."""
        old = self._rest_value(j)
        self.lower[j] = lo
        self.upper[j] = up
        st = self.vstatus[j]
        if st == BASIC:
            return
        if st == AT_LOWER:
            new = lo
        elif st == AT_UPPER:
            new = up
        else:
            return
        if new != old:
            w = self._ftran(j)
            self.xB -= (new - old) * w

    def apply_box(self, delta):
        """Set bounds to the root box overlaid with {var: (lo, up)} entries.

        Returns False if some overlay is empty (lo > up), leaving bounds in a
        consistent state for the caller to overwrite later.
        """
        ok = True
        for j in sorted(self._off_root | set(delta)):
            if j in delta:
                lo = max(self.root_lower[j], delta[j][0])
                up = min(self.root_upper[j], delta[j][1])
                if lo > up + 1e-12:
                    ok = False
                self._off_root.add(j)
            else:
                lo, up = self.root_lower[j], self.root_upper[j]
                self._off_root.discard(j)
            if lo != self.lower[j] or up != self.upper[j]:
                self.set_bound(j, lo, up)
        return ok

    # ----- state export ----------------------------------------------------

    def export_basis(self) -> BasisState:
        return BasisState(
            tuple(self.active_rows),
            tuple(int(j) for j in self.basis),
            self.vstatus.tobytes(),
        )

    def load_basis(self, state: BasisState) -> bool:
        if len(state.vstatus) != self.ncol:
            return False
        if any(k >= self.m_total for k in state.active_rows):
            return False
        self.active_rows = list(state.active_rows)
        self._active_set = set(self.active_rows)
        self._rebuild_active()
        self.basis = np.array(state.basis, dtype=np.int64)
        if self.basis.shape != (self.m_act,):
            return False
        self.vstatus = np.frombuffer(state.vstatus, dtype=np.int8).copy()
        self._idle.clear()
        try:
            self.refactor()
        except SolverFailure:
            return False
        return True

# ----- public entry points --------------------------------------------------


def _outcome_from_engine(eng, sf, status):
    if status == OPTIMAL:
        z = eng.objective()
        obj = -z if sf.maximize else z
        return LpOutcome(OPTIMAL, obj, eng.point(), eng.iters)
    if status == UNBOUNDED:
        obj = INF if sf.maximize else -INF
        return LpOutcome(UNBOUNDED, obj, None, eng.iters)
    return LpOutcome(INFEASIBLE, math.nan, None, eng.iters)


def solve_lp(model: MilpModel) -> LpOutcome:
    """Solve the LP relaxation of a model (integrality dropped).

    The returned point satisfies every constraint and bound within 1e-6.
    """
    sf = build_standard_form(model)
    if sf.fold_infeasible:
        return LpOutcome(INFEASIBLE, math.nan, None, 0)
    eng = LpEngine(sf)
    eng.slack_start()
    status = eng.solve_primal()
    return _outcome_from_engine(eng, sf, status)


def feasible_point(constraints, n_vars=None):
    """Find any point satisfying the given rows over free continuous vars.

    Returns None iff the system is infeasible, certified by a phase-1
    optimum with residual violation above tolerance.  Variable count is
    inferred from the largest index unless given.
    """
    if n_vars is None:
        n_vars = 0
        for con in constraints:
            if con.coeffs:
                n_vars = max(n_vars, con.coeffs[-1][0] + 1)
    from .model import VarSpec, MilpModel as _M

    vars = tuple(VarSpec(f"x{i}", lower=-INF, upper=INF) for i in range(n_vars))
    model = _M(vars, tuple(constraints), (), "min", ())
    sf = build_standard_form(model)
    if sf.fold_infeasible:
        return None
    eng = LpEngine(sf)
    eng.slack_start()
    status = eng.solve_primal()
    if status != OPTIMAL:
        return None
    return eng.point()
