"""Sparse conic program builder with interchangeable solver backends.

Programs are assembled as triplet batches (cheap for the large dual blocks
the robust counterparts emit), then handed to a backend in the standard
conic form

    min c'x  s.t.  A x + s = b,  s in (zero cone) x (nonneg cone) x (SOC...)

The primary backend is Clarabel; SCS is the fallback. Rows carry optional
tags so infeasibility can be reported in terms of the constraints a caller
named, via an elastic relaxation that minimizes total constraint slack.
"""

from __future__ import annotations

import bisect
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import InfeasibleProblemError, SolverError

_OPTIMAL = {"Solved": False, "AlmostSolved": True}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
_UNBOUNDED = {"DualInfeasible", "AlmostDualInfeasible"}


@dataclass
class Solution:
    status: str
    x: np.ndarray
    objective: float          # recomputed as c'x + const from the returned point
    solver_objective: float   # as reported by the backend
    iterations: int
    solve_seconds: float
    backend: str
    raw_status: str


class _TagRanges:
    """Row-range -> tag map that stays cheap for millions of untagged rows."""

    def __init__(self):
        self._starts = []
        self._ends = []
        self._tags = []

    def add(self, start, end, tag):
        if tag is not None and end > start:
            self._starts.append(start)
            self._ends.append(end)
            self._tags.append(tag)

    def lookup(self, row):
        k = bisect.bisect_right(self._starts, row) - 1
        if k >= 0 and row < self._ends[k]:
            return self._tags[k]
        return None


class ConicProgram:
    """Incrementally built conic program (variables, rows, cones, objective)."""

    def __init__(self):
        self._nvar = 0
        self._lo = []
        self._hi = []
        self._names = []
        self._eq = ([], [], [])   # entry rows, cols, vals (arrays per batch)
        self._eq_rhs = []
        self._neq = 0
        self._in = ([], [], [])
        self._in_rhs = []
        self._nin = 0
        self._soc = []            # list of blocks; block = list of (cols, vals, const)
        self._eq_tags = _TagRanges()
        self._in_tags = _TagRanges()
        self._obj_cols = []
        self._obj_vals = []
        self.obj_const = 0.0
        self._built = None

    @property
    def n_vars(self):
        return self._nvar

    @property
    def n_rows(self):
        return self._neq + self._nin + sum(len(b) for b in self._soc)

    def add_var(self, lo=None, hi=None, name=None):
        self._lo.append(lo)
        self._hi.append(hi)
        self._names.append(name)
        self._nvar += 1
        return self._nvar - 1

    def add_var_block(self, n, lo=None, hi=None, name=None):
        """n variables sharing the same bounds; returns their indices."""
        start = self._nvar
        self._lo.extend([lo] * n)
        self._hi.extend([hi] * n)
        self._names.extend([name] * n)
        self._nvar += n
        return np.arange(start, start + n)

    def _push(self, store, rhs_store, entry_rows, cols, vals, rhs, offset):
        entry_rows = np.asarray(entry_rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (entry_rows.shape == cols.shape == vals.shape):
            raise ValueError("entry_rows, cols and vals must be aligned 1-d arrays")
        store[0].append(entry_rows + offset)
        store[1].append(cols)
        store[2].append(vals)
        rhs_store.extend(np.asarray(rhs, dtype=np.float64).ravel())

    def add_eq_rows(self, entry_rows, cols, vals, rhs, tag=None):
        """Batch of equality rows; entry_rows index into this batch (0-based)."""
        start = self._neq
        rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        self._push(self._eq, self._eq_rhs, entry_rows, cols, vals, rhs, start)
        self._neq += rhs.size
        self._eq_tags.add(start, self._neq, tag)
        self._built = None

    def add_eq_row(self, cols, vals, rhs=0.0, tag=None):
        self.add_eq_rows(np.zeros(len(cols), dtype=np.int64), cols, vals, [rhs], tag)

    def add_ineq_rows(self, entry_rows, cols, vals, rhs, tag=None):
        """Batch of rows  sum vals*x <= rhs."""
        start = self._nin
        rhs = np.atleast_1d(np.asarray(rhs, dtype=np.float64))
        self._push(self._in, self._in_rhs, entry_rows, cols, vals, rhs, start)
        self._nin += rhs.size
        self._in_tags.add(start, self._nin, tag)
        self._built = None

    def add_ineq_row(self, cols, vals, rhs=0.0, tag=None):
        self.add_ineq_rows(np.zeros(len(cols), dtype=np.int64), cols, vals, [rhs], tag)

    def add_soc(self, slots, tag=None):
        """Second-order cone: slot0 >= norm(slot1..); each slot affine.

        slots is a sequence of (cols, vals, const) triples defining
        const + sum vals*x for that cone coordinate.
        """
        block = []
        for cols, vals, const in slots:
            cols = np.asarray(cols, dtype=np.int64)
            vals = np.asarray(vals, dtype=np.float64)
            block.append((cols, vals, float(const), tag))
        if len(block) < 2:
            raise ValueError("a second-order cone needs at least 2 slots")
        self._soc.append(block)
        self._built = None

    def set_objective(self, cols, vals, const=0.0):
        self._obj_cols = list(np.asarray(cols, dtype=np.int64))
        self._obj_vals = list(np.asarray(vals, dtype=np.float64))
        self.obj_const = float(const)
        self._built = None

    def objective_vector(self):
        c = np.zeros(self._nvar)
        np.add.at(c, self._obj_cols, self._obj_vals)
        return c

    def var_bounds(self):
        """Per-variable (lo, hi) arrays with +-inf for absent bounds."""
        lo = np.array([x if x is not None else -np.inf for x in self._lo])
        hi = np.array([x if x is not None else np.inf for x in self._hi])
        return lo, hi

    def _bound_rows(self):
        """Variable bounds as nonneg-cone rows appended after user rows."""
        lo, hi = self.var_bounds()
        lo_idx = np.where(np.isfinite(lo))[0]
        hi_idx = np.where(np.isfinite(hi))[0]
        rows = np.concatenate([np.arange(lo_idx.size),
                               lo_idx.size + np.arange(hi_idx.size)])
        cols = np.concatenate([lo_idx, hi_idx])
        vals = np.concatenate([-np.ones(lo_idx.size), np.ones(hi_idx.size)])
        rhs = np.concatenate([-lo[lo_idx], hi[hi_idx]])
        return rows, cols, vals, rhs

    def build(self):
        """Assemble (c, A, b, cone sizes). Cached until a row/var changes."""
        if self._built is not None:
            return self._built
        n = self._nvar

        def _stack(store, rhs, extra=None):
            rows = store[0] + ([extra[0]] if extra else [])
            cols = store[1] + ([extra[1]] if extra else [])
            vals = store[2] + ([extra[2]] if extra else [])
            if rows:
                r = np.concatenate(rows)
                c = np.concatenate(cols)
                v = np.concatenate(vals)
            else:
                r = c = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            m = len(rhs) + (extra[3].size if extra else 0)
            b = np.concatenate([rhs, extra[3]]) if extra else np.asarray(rhs, dtype=float)
            return sparse.coo_matrix((v, (r, c)), shape=(m, n)), b

        a_eq, b_eq = _stack(self._eq, self._eq_rhs)
        br, bc, bv, brhs = self._bound_rows()
        a_in, b_in = _stack(self._in, self._in_rhs,
                            (br + self._nin, bc, bv, brhs))

        soc_rows = []
        soc_rhs = []
        soc_dims = []
        for block in self._soc:
            soc_dims.append(len(block))
            for cols, vals, const, _tag in block:
                soc_rows.append((cols, -vals))
                soc_rhs.append(const)
        if soc_rows:
            r = np.concatenate([np.full(cols.size, i, dtype=np.int64)
                                for i, (cols, _v) in enumerate(soc_rows)])
            c = np.concatenate([cols for cols, _v in soc_rows])
            v = np.concatenate([vals for _c, vals in soc_rows])
            a_soc = sparse.coo_matrix((v, (r, c)), shape=(len(soc_rhs), n))
        else:
            a_soc = sparse.coo_matrix((0, n))

        a_mat = sparse.vstack([a_eq, a_in, a_soc]).tocsc()
        b_vec = np.concatenate([b_eq, b_in, np.asarray(soc_rhs, dtype=float)])
        self._built = (self.objective_vector(), a_mat, b_vec,
                       b_eq.size, b_in.size, soc_dims)
        return self._built

    def solve(self, backend="auto", diagnose_infeasible=True, **options):
        """Solve and return a Solution; raises on infeasibility or failure."""
        c, a_mat, b_vec, neq, nin, soc_dims = self.build()
        if backend == "auto":
            backend = "clarabel" if _have("clarabel") else "scs"
        t0 = time.perf_counter()
        if backend == "clarabel":
            status, raw, x, obj, iters = _solve_clarabel(
                c, a_mat, b_vec, neq, nin, soc_dims, options)
        elif backend == "scs":
            status, raw, x, obj, iters = _solve_scs(
                c, a_mat, b_vec, neq, nin, soc_dims, options)
        else:
            raise SolverError(f"unknown backend {backend!r}")
        elapsed = time.perf_counter() - t0

        if status == "infeasible":
            conflicts = None
            if diagnose_infeasible and self.n_rows <= 20000:
                conflicts = self.infeasibility_report(backend=backend)
            raise InfeasibleProblemError(
                f"problem reported infeasible by {backend} ({raw})",
                conflicting_rows=conflicts)
        if status == "unbounded":
            raise SolverError(f"problem reported unbounded by {backend} ({raw})",
                              status="unbounded")
        if status != "optimal":
            raise SolverError(f"{backend} failed: {raw}", status=status)
        recomputed = float(c @ x) + self.obj_const
        return Solution(status="optimal", x=x, objective=recomputed,
                        solver_objective=obj + self.obj_const,
                        iterations=iters, solve_seconds=elapsed,
                        backend=backend, raw_status=raw)

    def infeasibility_report(self, backend="auto", slack_tol=1e-6):
        """Tags of rows that an elastic relaxation must violate.

        Adds slack to every user equality/inequality row (bounds stay hard),
        minimizes total slack, and reports the tags of rows with slack above
        slack_tol. Empty list means the relaxation itself failed to localize.
        """
        c, a_mat, b_vec, neq, nin, soc_dims = self.build()
        n_user_in = self._nin
        n = self._nvar
        # slack layout: eq rows get s+ and s-, user ineq rows get one s
        s_plus = sparse.vstack([
            sparse.identity(neq, format="coo"),
            sparse.coo_matrix((b_vec.size - neq, neq)),
        ])
        s_minus = -s_plus
        s_in = sparse.vstack([
            sparse.coo_matrix((neq, n_user_in)),
            -sparse.identity(n_user_in, format="coo"),
            sparse.coo_matrix((b_vec.size - neq - n_user_in, n_user_in)),
        ])
        a_ext = sparse.hstack([a_mat, s_plus, s_minus, s_in]).tocsc()
        n_slack = 2 * neq + n_user_in
        c_ext = np.concatenate([np.zeros(n), np.ones(n_slack)])
        # slacks must be nonnegative: -s <= 0 appended to the nonneg block
        rows = sparse.hstack([sparse.coo_matrix((n_slack, n)),
                              -sparse.identity(n_slack, format="coo")])
        top = a_ext[:neq + nin]
        soc_part = a_ext[neq + nin:]
        a_full = sparse.vstack([top[:neq], top[neq:], rows, soc_part]).tocsc()
        b_full = np.concatenate([b_vec[:neq + nin], np.zeros(n_slack),
                                 b_vec[neq + nin:]])
        nin_full = nin + n_slack
        if backend == "auto":
            backend = "clarabel" if _have("clarabel") else "scs"
        solver = _solve_clarabel if backend == "clarabel" else _solve_scs
        status, _raw, x, _obj, _it = solver(c_ext, a_full, b_full, neq,
                                            nin_full, soc_dims, {})
        if status != "optimal":
            return []
        tags = []
        s_eq = np.abs(x[n:n + neq] - x[n + neq:n + 2 * neq])
        for row in np.where(s_eq > slack_tol * (1.0 + np.abs(b_vec[:neq])))[0]:
            tag = self._eq_tags.lookup(int(row))
            if tag and tag not in tags:
                tags.append(tag)
        s_ineq = x[n + 2 * neq:]
        rhs_in = b_vec[neq:neq + n_user_in]
        for row in np.where(s_ineq > slack_tol * (1.0 + np.abs(rhs_in)))[0]:
            tag = self._in_tags.lookup(int(row))
            if tag and tag not in tags:
                tags.append(tag)
        return tags

    def dump_text(self, path, max_rows=None):
        """Human-readable listing of the program (for small debug dumps)."""
        c, a_mat, b_vec, neq, nin, soc_dims = self.build()
        a_csr = a_mat.tocsr()

        def _term(col, val):
            name = self._names[col] or f"x{col}"
            return f"{val:+.6g} {name}"

        def _row_str(r):
            lo, hi = a_csr.indptr[r], a_csr.indptr[r + 1]
            terms = " ".join(_term(a_csr.indices[k], a_csr.data[k])
                             for k in range(lo, hi))
            return terms or "0"

        lines = ["minimize " + (" ".join(_term(int(i), c[i]) for i in np.nonzero(c)[0])
                                or "0")]
        if self.obj_const:
            lines[0] += f" {self.obj_const:+.6g}"
        total = b_vec.size if max_rows is None else min(b_vec.size, max_rows)
        for r in range(min(neq, total)):
            tag = self._eq_tags.lookup(r)
            lines.append(f"eq[{r}]{f' ({tag})' if tag else ''}: "
                         f"{_row_str(r)} == {b_vec[r]:.6g}")
        for r in range(neq, min(neq + nin, total)):
            tag = self._in_tags.lookup(r - neq) if r - neq < self._nin else None
            kind = "ineq" if r - neq < self._nin else "bound"
            lines.append(f"{kind}[{r - neq}]{f' ({tag})' if tag else ''}: "
                         f"{_row_str(r)} <= {b_vec[r]:.6g}")
        row = neq + nin
        for i, dim in enumerate(soc_dims):
            if row >= total:
                break
            parts = [f"{b_vec[row + k]:.6g} - ({_row_str(row + k)})" for k in range(dim)]
            lines.append(f"soc[{i}]: ({'; '.join(parts)}) in SOC{dim}")
            row += dim
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _have(module):
    try:
        __import__(module)
        return True
    except ImportError:
        return False


def _solve_clarabel(c, a_mat, b_vec, neq, nin, soc_dims, options):
    import clarabel

    cones = []
    if neq:
        cones.append(clarabel.ZeroConeT(neq))
    if nin:
        cones.append(clarabel.NonnegativeConeT(nin))
    cones.extend(clarabel.SecondOrderConeT(d) for d in soc_dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = bool(options.get("verbose", False))
    if "max_iter" in options:
        settings.max_iter = int(options["max_iter"])
    if "time_limit" in options:
        settings.time_limit = float(options["time_limit"])
    if "tol" in options:
        tol = float(options["tol"])
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
    p_mat = sparse.csc_matrix((c.size, c.size))
    solver = clarabel.DefaultSolver(p_mat, c, a_mat, b_vec, cones, settings)
    sol = solver.solve()
    raw = getattr(sol.status, "name", None) or str(sol.status)
    if raw in _OPTIMAL:
        if _OPTIMAL[raw]:
            warnings.warn(f"clarabel finished with reduced accuracy ({raw})")
        status = "optimal"
    elif raw in _INFEASIBLE:
        status = "infeasible"
    elif raw in _UNBOUNDED:
        status = "unbounded"
    else:
        status = "numerical-failure"
    x = np.asarray(sol.x) if sol.x is not None else np.full(c.size, np.nan)
    return status, raw, x, float(sol.obj_val or np.nan), int(sol.iterations)


def _solve_scs(c, a_mat, b_vec, neq, nin, soc_dims, options):
    import scs

    data = {"A": a_mat.tocsc(), "b": b_vec, "c": c}
    cone = {}
    if neq:
        cone["z"] = neq
    if nin:
        cone["l"] = nin
    if soc_dims:
        cone["q"] = list(soc_dims)
    solver = scs.SCS(data, cone,
                     verbose=bool(options.get("verbose", False)),
                     eps_abs=float(options.get("eps_abs", 1e-7)),
                     eps_rel=float(options.get("eps_rel", 1e-7)))
    sol = solver.solve()
    raw = sol["info"]["status"]
    low = raw.lower()
    if "infeasible" in low:
        status = "infeasible"
    elif "unbounded" in low:
        status = "unbounded"
    elif "solved" in low:
        status = "optimal"
        if "inaccurate" in low:
            warnings.warn(f"scs finished with reduced accuracy ({raw})")
    else:
        status = "numerical-failure"
    return (status, raw, np.asarray(sol["x"]),
            float(sol["info"].get("pobj", np.nan)), int(sol["info"]["iter"]))
