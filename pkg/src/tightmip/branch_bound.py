"""Branch and bound over binary variables, instrumented for benchmarking.

The tree search keeps one rolling LP engine.  After branching, the search
plunges: it keeps solving the child on the rounding side, which differs
from the engine's current box by a single bound, so the dual re-solve is
a handful of pivots.  The opposite children go on a best-bound heap
(ties by node id) and are replayed onto the engine when the plunge dies
out.

Two branching rules are available.  "most-fractional" picks the binary
closest to one half (ties by lowest variable index).  "reliability"
estimates per-variable bound degradation with pseudocosts and, while a
variable's estimate is still unreliable, measures it directly by
strong-branching probes (budgeted dual re-solves of both sides); probe
outcomes that prove a side unreachable fix the variable at the node.
On loosely bounded relaxations the probes are what collapse the bound,
so reliability is the practical choice at scale; both rules are fully
deterministic.

Further devices keep the tree small: a deterministic LP-guided dive at
the root for an early incumbent, an optional caller-supplied incumbent
hint priced by one LP, a periodic one-shot rounding dive during the
search, and reduced-cost fixing of nonbasic binaries once an incumbent
exists.  None of them affect correctness, only pruning.

Everything is deterministic for a fixed model and config: identical
reruns produce identical node counts, traces (up to wall times) and
points.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import MAX, MilpModel, evaluate
from .simplex import (
    AT_LOWER,
    AT_UPPER,
    CUTOFF,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    BasisState,
    LpEngine,
    SolverFailure,
    build_standard_form,
)

INT_TOL = 1e-6
DIVE_EVERY = 64  # nodes between one-shot rounding dives
SB_ETA = 32  # strong-branch a side until it has this many observations
SB_CAND = 32  # unreliable candidates probed per node
SB_ITERS = 400  # dual pivot budget per strong-branch probe


@dataclass
class SolveConfig:
    gap_limit: float = 0.0
    node_limit: int = 0  # 0 means unlimited
    time_limit: float = 0.0  # seconds, 0 means unlimited
    branching: str = "most-fractional"
    node_order: str = "best-bound"
    seed: int = 0
    lazy_tags: tuple = ()
    root_dive: bool = True

    def check(self):
        if not 0.0 <= self.gap_limit < 1.0:
            raise ValueError("gap_limit must lie in [0, 1)")
        if self.branching not in ("most-fractional", "reliability"):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_order != "best-bound":
            raise ValueError(f"unknown node order {self.node_order!r}")
        if self.node_limit < 0 or self.time_limit < 0:
            raise ValueError("limits must be nonnegative")


@dataclass
class MilpOutcome:
    status: str
    objective: float
    point: object
    nodes: int
    iterations: int
    wall_time: float
    gap: float
    bound_trace: list
    root_basis: object = None


def relative_gap(lower: float, upper: float) -> float:
    if not (math.isfinite(lower) and math.isfinite(upper)):
        return math.inf
    return abs(upper - lower) / max(abs(upper), 1e-9)


class _Search:
    def __init__(
        self,
        model: MilpModel,
        cfg: SolveConfig,
        start: BasisState | None,
        hint=None,
    ):
        self.model = model
        self.cfg = cfg
        self.maximize = model.sense == MAX
        self.sf = build_standard_form(model)
        self.binaries = np.array(model.binary_index, dtype=np.int64)
        self.lazy_tags = tuple(cfg.lazy_tags)
        self.start = start
        self.hint = hint
        self.t0 = time.perf_counter()
        self.trace = []
        self.inc_z = math.inf
        self.inc_x = None
        self.glb = -math.inf
        self.nodes = 0
        self.dead_iters = 0  # iterations of engines discarded after failures
        self.cur_delta = {}
        self.eng = None
        n = self.sf.n_struct
        self.pc_dn_sum = np.zeros(n)
        self.pc_dn_cnt = np.zeros(n, dtype=np.int64)
        self.pc_up_sum = np.zeros(n)
        self.pc_up_cnt = np.zeros(n, dtype=np.int64)

    # bounds in the external sense ---------------------------------------

    def _ext(self, z):
        return -z if self.maximize else z

    def _bounds_ext(self):
        inc = self._ext(self.inc_z) if self.inc_x is not None else None
        bnd = self._ext(self.glb) if math.isfinite(self.glb) else None
        if self.maximize:
            lower = inc if inc is not None else -math.inf
            upper = bnd if bnd is not None else math.inf
        else:
            lower = bnd if bnd is not None else -math.inf
            upper = inc if inc is not None else math.inf
        return lower, upper

    def _record(self):
        lower, upper = self._bounds_ext()
        self.trace.append((time.perf_counter() - self.t0, lower, upper))

    # engine management ----------------------------------------------------

    def _fresh_engine(self, keep_active=None):
        eng = LpEngine(self.sf, self.lazy_tags)
        if keep_active:
            eng.ensure_active(keep_active)
        return eng

    def _rebuild_cold(self):
        active = list(self.eng.active_rows) if self.eng is not None else None
        self.dead_iters += self.eng.iters if self.eng is not None else 0
        self.eng = self._fresh_engine(active)
        self.eng.slack_start()
        self.eng.apply_box(self.cur_delta)

    def _node_lp(self):
        limit = self.inc_z - self._prune_eps() if math.isfinite(self.inc_z) else math.inf
        try:
            return self.eng.solve_dual(obj_limit=limit)
        except SolverFailure:
            pass
        self._rebuild_cold()
        try:
            return self.eng.solve_primal()
        except SolverFailure:
            pass
        # last resort: a cold solve over the full row set follows a
        # different pivot path and skips lazy settlement entirely
        self._rebuild_cold()
        self.eng.ensure_active(range(self.eng.m_total))
        self.eng.slack_start()
        self.eng.apply_box(self.cur_delta)
        return self.eng.solve_primal()

    # pieces -----------------------------------------------------------------

    def _fractional(self, x):
        if self.binaries.size == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        vals = x[self.binaries]
        dist = np.abs(vals - np.round(vals))
        mask = dist > INT_TOL
        return self.binaries[mask], vals[mask]

    def _try_incumbent(self, z, x):
        if z >= self.inc_z - self._prune_eps():
            return False
        res = evaluate(self.model, x)
        if not res.feasible:
            raise SolverFailure(
                f"integral LP point failed model check (violation {res.max_violation:.3e})"
            )
        self.inc_z = z
        self.inc_x = np.array(x)
        self._record()
        return True

    def _prune_eps(self):
        if not math.isfinite(self.inc_z):
            return 0.0
        return 1e-9 * max(1.0, abs(self.inc_z))

    def _dive(self):
        """Round-and-fix dive from the root LP for an early incumbent."""
        delta = {}
        for _ in range(self.binaries.size):
            x = self.eng.point()
            frac_idx, frac_vals = self._fractional(x)
            if frac_idx.size == 0:
                z = self.eng.objective()
                self._try_incumbent(z, x)
                break
            pick = int(np.argmax(np.abs(frac_vals - 0.5)))
            j = int(frac_idx[pick])
            v = float(np.round(frac_vals[pick]))
            delta[j] = (v, v)
            self.cur_delta = delta
            if not self.eng.apply_box(delta):
                break
            try:
                limit = self.inc_z - self._prune_eps() if math.isfinite(self.inc_z) else math.inf
                if self.eng.solve_dual(obj_limit=limit) != OPTIMAL:
                    break
            except SolverFailure:
                self._rebuild_cold()
                break
        self.cur_delta = {}
        self.eng.apply_box({})

    def _quick_dive(self, delta, x):
        """One-shot rounding of all free binaries at the current node.

        All binaries get fixed at once and a single re-solve completes the
        continuous part; any feasible completion is integral by
        construction.  The engine is left on the dived box; the next node
        overlay rewinds it.
        """
        rounded = dict(delta)
        for j in self.binaries:
            jj = int(j)
            if jj not in rounded:
                v = float(np.round(x[jj]))
                rounded[jj] = (v, v)
        self.cur_delta = rounded
        if not self.eng.apply_box(rounded):
            return
        try:
            status = self.eng.solve_dual(obj_limit=self.inc_z - self._prune_eps())
        except SolverFailure:
            self._rebuild_cold()
            return
        if status != OPTIMAL:
            return
        z = self.eng.objective()
        if z >= self.inc_z - self._prune_eps():
            return
        xx = self.eng.point()
        frac_idx, _ = self._fractional(xx)
        if frac_idx.size == 0:
            self._try_incumbent(z, xx)

    def _hint_incumbent(self):
        """Price a suggested binary assignment and adopt it when feasible.

        The suggestion typically comes from a solved instance of the same
        parametric family: fixing every binary leaves a pure LP, so one
        warm re-solve prices it exactly and the search starts with a
        near-optimal upper bound instead of none.  A useless suggestion
        costs one LP and changes nothing; correctness never depends on it.
        """
        vals = np.round(np.asarray(self.hint, dtype=float)[self.binaries])
        np.clip(vals, 0.0, 1.0, out=vals)
        box = {int(j): (float(v), float(v)) for j, v in zip(self.binaries, vals)}
        snap = self._probe_snapshot()
        self.cur_delta = box
        if self.eng.apply_box(box):
            try:
                status = self.eng.solve_dual()
            except SolverFailure:
                self._rebuild_cold()
                status = None
            if status == OPTIMAL:
                z = self.eng.objective()
                x = self.eng.point()
                frac_idx, _ = self._fractional(x)
                if frac_idx.size == 0:
                    self._try_incumbent(z, x)
        self._probe_restore(snap)
        self.cur_delta = {}
        self.eng.apply_box({})

    # branching ------------------------------------------------------------

    def _pc_note(self, obs, child_z):
        """Fold one observed child bound into the pseudocost statistics."""
        if obs is None or not math.isfinite(child_z):
            return
        j, side, denom, parent_z = obs
        gain = max(child_z - parent_z, 0.0) / max(denom, 1e-6)
        if side == 0:
            self.pc_dn_sum[j] += gain
            self.pc_dn_cnt[j] += 1
        else:
            self.pc_up_sum[j] += gain
            self.pc_up_cnt[j] += 1

    def _pc_avg(self, idx, side):
        """Average per-unit bound gain for each index, falling back to the
        fleet average (or 1.0) where a variable has no observations yet."""
        sums = self.pc_dn_sum if side == 0 else self.pc_up_sum
        cnts = self.pc_dn_cnt if side == 0 else self.pc_up_cnt
        total = cnts.sum()
        default = (sums.sum() / total) if total else 1.0
        out = np.full(idx.size, max(default, 1e-6))
        have = cnts[idx] > 0
        out[have] = sums[idx[have]] / cnts[idx[have]]
        return out

    def _probe_snapshot(self):
        """Copy the engine state needed to rewind a strong-branch probe.

        Valid only while the active row set stays fixed, which holds
        because probes run the bare dual loop without lazy settlement.
        """
        e = self.eng
        return (
            e.basis.copy(),
            e.Binv.copy(order="F"),
            e.xB.copy(),
            e.vstatus.copy(),
            e.d.copy(),
            e.lower.copy(),
            e.upper.copy(),
            set(e._off_root),
            e._pivots_since_refactor,
            tuple(e.active_rows),
            dict(e._idle),
        )

    def _probe_restore(self, snap):
        e = self.eng
        e.basis = snap[0].copy()
        e.Binv = snap[1].copy(order="F")
        e.xB = snap[2].copy()
        e.vstatus = snap[3].copy()
        e.d = snap[4].copy()
        e.lower = snap[5].copy()
        e.upper = snap[6].copy()
        # bounds arrays and the overlay bookkeeping must move together,
        # or later box rewinds would skip the stale entries
        e._off_root = set(snap[7])
        e._pivots_since_refactor = snap[8]
        if tuple(e.active_rows) != snap[9]:
            # something between snapshot and restore settled or shed rows;
            # the saved basis only matches the saved active set
            e.active_rows = list(snap[9])
            e._active_set = set(snap[9])
            e._rebuild_active()
            e._idle = dict(snap[10])

    def _sb_probe(self, snap, delta, j, v):
        """Budgeted dual re-solve of one branching side from the node basis.

        The engine is rewound to the node optimum first, so the probe is
        a single-bound warm re-solve.  Lazy settlement is skipped: the
        value of the active relaxation already bounds the child from
        below, which is all that pruning, fixing and pseudocosts need.
        Returns that bound, inf when the side is proved infeasible or
        cutoff-dominated, or None when the pivot budget ran out first.
        """
        e = self.eng
        self._probe_restore(snap)
        probe = dict(delta)
        probe[j] = (v, v)
        self.cur_delta = probe
        if not e.apply_box(probe):
            return math.inf
        e._bland = False
        e._degen_streak = 0
        e._budget_end = e.iters + SB_ITERS
        try:
            status = e._dual(self.inc_z - self._prune_eps())
        except SolverFailure:
            # budget or breakdown; the next restore erases either
            return None
        if status == INFEASIBLE or status == CUTOFF:
            return math.inf
        if status == OPTIMAL:
            return e.objective()
        return None

    def _pick_branch(self, delta, z, frac_idx, frac_vals):
        """Choose the branching variable at a solved node.

        Returns (var, keep side, bound of keep child, bound of other
        child, fractional part, node bound), or None when the node
        resolved itself during selection (pruned, infeasible or
        integral).  May tighten ``delta`` in place with fixings proved
        by probing.
        """
        if self.cfg.branching == "reliability":
            return self._pick_reliability(delta, z, frac_idx, frac_vals)
        score = np.abs(frac_vals - 0.5)
        pick = int(np.argmin(score))
        j = int(frac_idx[pick])
        fv = float(frac_vals[pick])
        keep_v = float(np.round(fv))
        return j, keep_v, z, z, fv - math.floor(fv), z

    def _pick_reliability(self, delta, z, frac_idx, frac_vals):
        """Pseudocost selection, strong-branching unreliable candidates.

        Candidates are ranked by the product of estimated down and up
        bound degradations.  While the estimate for a promising variable
        rests on fewer than SB_ETA observations per side, both of its
        child boxes are probe-solved under a pivot budget; the measured
        values feed the statistics and double as child bounds when the
        variable wins the ranking.  A probe that proves one side
        infeasible or cutoff-dominated fixes the variable at this node
        and the selection restarts on the re-solved LP.
        """
        probed = {}
        while True:
            cutoff = self.inc_z - self._prune_eps()
            f = frac_vals - np.floor(frac_vals)
            dn = self._pc_avg(frac_idx, 0) * f
            up = self._pc_avg(frac_idx, 1) * (1.0 - f)
            score = np.maximum(dn, 1e-6) * np.maximum(up, 1e-6)
            counts = np.minimum(self.pc_dn_cnt[frac_idx], self.pc_up_cnt[frac_idx])
            order = np.argsort(-score, kind="stable")
            todo = [
                int(k)
                for k in order
                if counts[k] < SB_ETA and int(frac_idx[k]) not in probed
            ][:SB_CAND]
            if not todo:
                break
            fixed = None
            pruned = False
            out_of_time = False
            snap = self._probe_snapshot()
            for k in todo:
                if self.cfg.time_limit and time.perf_counter() - self.t0 > self.cfg.time_limit:
                    out_of_time = True
                    break
                j = int(frac_idx[k])
                fj = float(f[k])
                z_dn = self._sb_probe(snap, delta, j, 0.0)
                z_up = self._sb_probe(snap, delta, j, 1.0)
                if z_dn is not None and math.isfinite(z_dn):
                    self._pc_note((j, 0, fj, z), z_dn)
                if z_up is not None and math.isfinite(z_up):
                    self._pc_note((j, 1, 1.0 - fj, z), z_up)
                probed[j] = (z_dn, z_up)
                dn_dead = z_dn is not None and z_dn >= cutoff
                up_dead = z_up is not None and z_up >= cutoff
                if dn_dead and up_dead:
                    pruned = True
                    break
                if dn_dead:
                    fixed = (j, 1.0)
                    break
                if up_dead:
                    fixed = (j, 0.0)
                    break
            self._probe_restore(snap)
            self.cur_delta = delta
            box_ok = self.eng.apply_box(delta)
            if pruned or not box_ok:
                return None
            if fixed is None:
                if out_of_time:
                    break
                continue
            j, v = fixed
            delta[j] = (v, v)
            self.cur_delta = delta
            if not self.eng.apply_box(delta):
                return None
            status = self._node_lp()
            if status == INFEASIBLE or status == CUTOFF:
                return None
            if status != OPTIMAL:
                raise SolverFailure(f"unexpected node LP status {status}")
            z = max(z, self.eng.objective())
            if z >= self.inc_z - self._prune_eps():
                return None
            x = self.eng.point()
            frac_idx, frac_vals = self._fractional(x)
            if frac_idx.size == 0:
                self._try_incumbent(z, x)
                return None
        k = int(np.argmax(score))
        j = int(frac_idx[k])
        fv = float(frac_vals[k])
        keep_v = float(np.round(fv))
        z_dn, z_up = probed.get(j, (None, None))
        b_dn = z_dn if (z_dn is not None and math.isfinite(z_dn)) else z
        b_up = z_up if (z_up is not None and math.isfinite(z_up)) else z
        fj = fv - math.floor(fv)
        if keep_v >= 0.5:
            return j, keep_v, b_up, b_dn, fj, z
        return j, keep_v, b_dn, b_up, fj, z

    def _rc_fix(self, z, delta, d=None, status=None):
        """Fix nonbasic binaries whose reduced cost already exceeds the gap.

        Valid for the whole subtree of the node solved at objective z: a
        nonbasic binary at a bound costs at least its reduced cost to move,
        so if that exceeds the incumbent gap the far bound cannot win.
        """
        if not math.isfinite(self.inc_z):
            return
        room = (self.inc_z - self._prune_eps()) - z
        if room < 0.0:
            return
        d = self.eng.d if d is None else d
        status = self.eng.vstatus if status is None else status
        b = self.binaries
        stb = status[b]
        db = d[b]
        # only binaries still free in this node; a fixed one is nonbasic at
        # its branched bound and must not be touched
        free = self.eng.upper[b] > self.eng.lower[b] + 0.5
        at_lo = free & (stb == AT_LOWER) & (db > room + 1e-9)
        at_up = free & (stb == AT_UPPER) & (-db > room + 1e-9)
        changed = False
        for j in b[at_lo]:
            delta[int(j)] = (0.0, 0.0)
            changed = True
        for j in b[at_up]:
            delta[int(j)] = (1.0, 1.0)
            changed = True
        if changed:
            # the fixed vars sit at their fixed bound already, so this
            # only narrows bound arrays and never moves the solution
            self.eng.apply_box(delta)

    # main loop ----------------------------------------------------------------

    def run(self) -> MilpOutcome:
        cfg = self.cfg
        if self.sf.fold_infeasible:
            return self._finish("infeasible")
        self.eng = self._fresh_engine()
        warm = False
        if self.start is not None:
            warm = self.eng.load_basis(self.start)
        if not warm:
            self.eng.slack_start()
        status = self.eng.solve_primal()
        self.nodes = 1
        root_basis = self.eng.export_basis()
        if status == UNBOUNDED:
            raise SolverFailure("relaxation is unbounded; cannot bound the search")
        if status == INFEASIBLE:
            return self._finish("infeasible", root_basis)
        root_z = self.eng.objective()
        self.glb = root_z
        self._record()

        x = self.eng.point()
        frac_idx, frac_vals = self._fractional(x)
        if frac_idx.size == 0:
            self._try_incumbent(root_z, x)
            self.glb = self.inc_z
            return self._finish("optimal", root_basis)

        root_d = self.eng.d.copy()
        root_status = self.eng.vstatus.copy()
        if self.hint is not None and self.binaries.size:
            self._hint_incumbent()
        if cfg.root_dive:
            self._dive()

        root_fix = {}
        self._rc_fix(root_z, root_fix, d=root_d, status=root_status)

        # the loop re-enters the root box as its first node
        heap = []  # (bound, id, delta, pseudocost observation)
        next_id = 1
        delta, bound, obs = root_fix, root_z, None
        last_dive = self.nodes

        while True:
            if delta is None:
                if not heap:
                    break
                bound, _, delta, obs = heapq.heappop(heap)
                if bound >= self.inc_z - self._prune_eps():
                    # best-bound order: everything left prunes as well
                    break
            if cfg.time_limit and time.perf_counter() - self.t0 > cfg.time_limit:
                return self._finish("time-limit", root_basis)
            if cfg.node_limit and self.nodes >= cfg.node_limit:
                return self._finish("node-limit", root_basis)
            open_min = min(bound, heap[0][0]) if heap else bound
            open_min = min(open_min, self.inc_z)
            if open_min > self.glb:
                self.glb = open_min
                self._record()
                if cfg.gap_limit:
                    lower, upper = self._bounds_ext()
                    if relative_gap(lower, upper) <= cfg.gap_limit:
                        return self._finish("gap-limit", root_basis)
            if bound >= self.inc_z - self._prune_eps():
                delta = None
                continue
            self.cur_delta = delta
            if not self.eng.apply_box(delta):
                delta = None
                continue
            status = self._node_lp()
            self.nodes += 1
            if status == INFEASIBLE or status == CUTOFF:
                delta = None
                continue
            if status != OPTIMAL:
                raise SolverFailure(f"unexpected node LP status {status}")
            self.eng.note_idle_rows()
            self.eng.shed_idle_rows()
            z = self.eng.objective()
            self._pc_note(obs, z)
            obs = None
            if z >= self.inc_z - self._prune_eps():
                delta = None
                continue
            x = self.eng.point()
            frac_idx, frac_vals = self._fractional(x)
            if frac_idx.size == 0:
                improved = self._try_incumbent(z, x)
                if improved and cfg.gap_limit:
                    lower, upper = self._bounds_ext()
                    if relative_gap(lower, upper) <= cfg.gap_limit:
                        return self._finish("gap-limit", root_basis)
                delta = None
                continue
            self._rc_fix(z, delta)
            if self.nodes - last_dive >= DIVE_EVERY:
                last_dive = self.nodes
                snap = self._probe_snapshot()
                self._quick_dive(delta, x)
                self._probe_restore(snap)
                self.cur_delta = delta
                if z >= self.inc_z - self._prune_eps():
                    delta = None
                    continue
            sel = self._pick_branch(delta, z, frac_idx, frac_vals)
            if sel is None:
                delta = None
                continue
            j, keep_v, bound_keep, bound_other, fj, z_sel = sel
            other = dict(delta)
            other[j] = (1.0 - keep_v, 1.0 - keep_v)
            if keep_v >= 0.5:
                obs_other = (j, 0, fj, z_sel)
                obs = (j, 1, 1.0 - fj, z_sel)
            else:
                obs_other = (j, 1, 1.0 - fj, z_sel)
                obs = (j, 0, fj, z_sel)
            heapq.heappush(heap, (bound_other, next_id, other, obs_other))
            next_id += 1
            delta[j] = (keep_v, keep_v)
            bound = bound_keep
        # tree exhausted
        if self.inc_x is None:
            return self._finish("infeasible", root_basis)
        self.glb = self.inc_z
        return self._finish("optimal", root_basis)

    def _finish(self, status, root_basis=None) -> MilpOutcome:
        wall = time.perf_counter() - self.t0
        iters = self.dead_iters + (self.eng.iters if self.eng is not None else 0)
        if self.inc_x is not None:
            if status == "optimal":
                self.glb = self.inc_z
            obj = self._ext(self.inc_z)
            point = self.inc_x
        else:
            obj = math.nan
            point = None
        if status in ("optimal", "gap-limit", "node-limit", "time-limit") and self.inc_x is not None:
            self._record()
        lower, upper = self._bounds_ext()
        gap = relative_gap(lower, upper) if self.inc_x is not None else math.nan
        return MilpOutcome(
            status=status,
            objective=obj,
            point=point,
            nodes=self.nodes,
            iterations=iters,
            wall_time=wall,
            gap=gap,
            bound_trace=self.trace,
            root_basis=root_basis,
        )


def solve_milp(
    model: MilpModel,
    cfg: SolveConfig | None = None,
    start=None,
    hint=None,
) -> MilpOutcome:
    """Solve a MILP to proven optimality (or a configured limit).

    ``start`` may carry a BasisState from a structurally identical model
    (same variables and rows, different numbers) to warm start the root.
    ``hint`` may carry a variable vector from such a model; its rounded
    binary part is priced by one LP and, when feasible, becomes the
    starting incumbent.
    """
    cfg = cfg or SolveConfig()
    cfg.check()
    return _Search(model, cfg, start, hint).run()
