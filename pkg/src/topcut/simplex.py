"""Dense bounded-variable dual simplex for the branch-and-bound backend.

Solves ``max c.x  s.t.  lo <= A x <= hi,  l <= x <= u`` with finite ``l, u``.
Each row gets a slack ``s = -a.x`` so the all-slack basis is the identity.
Every variable is boxed (a slack's infinite side is replaced by a bound its
row can never reach), so any basis can be made dual feasible by moving
nonbasic variables to the bound matching their reduced-cost sign.  That is
what lets branch-and-bound children and newly added cut rows warm start
from the parent's basis.

Internally the problem is a minimisation of ``cost = -c + perturbation``;
the small random perturbation breaks the massive dual degeneracy of
zero-cost arc variables.  :meth:`DualSimplex.bound` corrects for it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time_limit"
ITERATION_LIMIT = "iteration_limit"

PRIMAL_TOL = 1e-7
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-7
REFACTOR_EVERY = 80


class LPError(RuntimeError):
    pass


@dataclass
class Basis:
    head: np.ndarray  # variable index basic in each row
    at_upper: np.ndarray  # bool per variable, meaningful for nonbasic ones


class DualSimplex:
    def __init__(self, c, A, row_lo, row_hi, lb, ub, perturb: float = 1e-7, seed: int = 0):
        A = sp.csr_matrix(A, dtype=float)
        k, n = A.shape
        self.n = n
        self.k = k
        self.c = np.asarray(c, dtype=float)
        rng = np.random.default_rng(seed)
        self.pert = perturb * (1.0 + rng.random(n))
        self._A = A
        self._Acsc = A.tocsc()
        self.lower = np.empty(n + k)
        self.upper = np.empty(n + k)
        self.lower[:n] = lb
        self.upper[:n] = ub
        self._set_slack_bounds(0, np.asarray(row_lo, float), np.asarray(row_hi, float))
        self.cost = np.concatenate([-self.c + self.pert, np.zeros(k)])
        self.x = np.zeros(n + k)
        self.d = self.cost.copy()
        self.is_basic = np.zeros(n + k, dtype=bool)
        self.is_basic[n:] = True
        self.head = np.arange(n, n + k)
        self.at_upper = np.zeros(n + k, dtype=bool)
        self.Binv = np.eye(k)
        self.iterations = 0
        self.status: Optional[str] = None
        self._since_refactor = 0
        self._refactor()

    # -- setup --------------------------------------------------------------
    def _set_slack_bounds(self, start: int, lo: np.ndarray, hi: np.ndarray) -> None:
        A = self._A
        n = self.n
        rows = range(start, start + len(lo))
        absrow = np.asarray(abs(A[start:start + len(lo)]).sum(axis=1)).ravel()
        reach = absrow * np.maximum(np.abs(self.lower[:n]).max(initial=1.0),
                                    np.abs(self.upper[:n]).max(initial=1.0)) + 1.0
        s_lo = np.where(np.isfinite(hi), -hi, -reach)
        s_hi = np.where(np.isfinite(lo), -lo, reach)
        for off, r in enumerate(rows):
            self.lower[n + r] = s_lo[off]
            self.upper[n + r] = s_hi[off]

    def add_rows(self, A_new, lo, hi) -> None:
        """Append rows; their slacks enter the basis and dual feasibility is kept."""
        A_new = sp.csr_matrix(A_new, dtype=float)
        extra = A_new.shape[0]
        if extra == 0:
            return
        n, k = self.n, self.k
        old_slack = slice(n, n + k)
        self._A = sp.vstack([self._A, A_new], format="csr")
        self._Acsc = self._A.tocsc()
        # re-index: old slacks keep their relative order after the structurals
        lower = np.concatenate([self.lower[:n], self.lower[old_slack], np.zeros(extra)])
        upper = np.concatenate([self.upper[:n], self.upper[old_slack], np.zeros(extra)])
        self.lower, self.upper = lower, upper
        self.k = k + extra
        self._set_slack_bounds(k, np.asarray(lo, float), np.asarray(hi, float))
        self.cost = np.concatenate([self.cost, np.zeros(extra)])
        self.x = np.concatenate([self.x, np.zeros(extra)])
        self.d = np.concatenate([self.d, np.zeros(extra)])
        self.is_basic = np.concatenate([self.is_basic, np.ones(extra, dtype=bool)])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(extra, dtype=bool)])
        self.head = np.concatenate([self.head, np.arange(n + k, n + k + extra)])
        self.status = None
        self._refactor()

    # -- basis bookkeeping --------------------------------------------------
    def _basis_matrix(self) -> np.ndarray:
        n, k = self.n, self.k
        B = np.zeros((k, k))
        struct = self.head < n
        if struct.any():
            B[:, struct] = self._Acsc[:, self.head[struct]].toarray()
        slack_pos = np.nonzero(~struct)[0]
        B[self.head[slack_pos] - n, slack_pos] = 1.0
        return B

    def _refactor(self) -> None:
        n, k = self.n, self.k
        if k:
            try:
                self.Binv = np.asfortranarray(np.linalg.inv(self._basis_matrix()))
            except np.linalg.LinAlgError:
                raise LPError("singular basis") from None
        else:
            self.Binv = np.zeros((0, 0))
        self._since_refactor = 0
        # duals and reduced costs
        y = self.cost[self.head] @ self.Binv if k else np.zeros(0)
        self.d[:n] = self.cost[:n] - self._Acsc.T @ y
        self.d[n:] = self.cost[n:] - y
        self.d[self.head] = 0.0
        # nonbasic variables sit on the bound their reduced cost prefers
        nb = ~self.is_basic
        fixed = self.lower == self.upper
        self.at_upper[nb & (self.d < -DUAL_TOL) & ~fixed] = True
        self.at_upper[nb & (self.d > DUAL_TOL) & ~fixed] = False
        self.x = np.where(self.at_upper, self.upper, self.lower)
        self._recompute_basic()

    def _recompute_basic(self) -> None:
        n = self.n
        tmp = self.x.copy()
        tmp[self.head] = 0.0
        rhs = self._A @ tmp[:n] + tmp[n:]
        self.x[self.head] = -(self.Binv @ rhs) if self.k else 0.0

    def _column(self, j: int) -> np.ndarray:
        if j >= self.n:
            return self.Binv[:, j - self.n].copy()
        col = self._Acsc[:, j]
        return self.Binv[:, col.indices] @ col.data

    def snapshot(self) -> Basis:
        return Basis(self.head.copy(), self.at_upper.copy())

    def restore(self, basis: Basis) -> None:
        """Reinstate a snapshot; rows appended since then enter with basic slacks."""
        n, k = self.n, self.k
        head = basis.head
        if len(head) < k:
            head = np.concatenate([head, np.arange(n + len(head), n + k)])
        at_upper = np.zeros(n + k, dtype=bool)
        at_upper[: len(basis.at_upper)] = basis.at_upper
        self.head = head.copy()
        self.at_upper = at_upper
        self.is_basic[:] = False
        self.is_basic[self.head] = True
        self.status = None
        self._refactor()

    def set_bounds(self, j: int, lo: float, hi: float) -> None:
        self.lower[j] = lo
        self.upper[j] = hi
        self.status = None
        if self.is_basic[j]:
            return
        if lo == hi:
            new = lo
        else:
            self.at_upper[j] = self.d[j] < 0
            new = hi if self.at_upper[j] else lo
        delta = new - self.x[j]
        if delta:
            self.x[self.head] -= delta * self._column(j)
            self.x[j] = new

    def set_all_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        """Replace structural bounds wholesale (basis kept; call before restore)."""
        self.lower[: self.n] = lb
        self.upper[: self.n] = ub
        self.status = None

    # -- results ------------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return self.x[: self.n]

    def objective(self) -> float:
        return float(self.c @ self.x[: self.n])

    def bound(self) -> float:
        """Upper bound on the unperturbed maximum; valid at any dual-feasible basis."""
        z = -float(self.cost @ self.x)
        n = self.n
        slack = np.maximum(self.pert * self.lower[:n], self.pert * self.upper[:n]).sum()
        return z + float(slack)

    # -- main loop ----------------------------------------------------------
    def solve(self, deadline: Optional[float] = None, max_iter: Optional[int] = None) -> str:
        if max_iter is None:
            max_iter = 50 * (self.n + self.k) + 1000
        if np.any(self.lower > self.upper + PRIMAL_TOL):
            self.status = INFEASIBLE
            return self.status
        bland = False
        stall = 0
        last_obj = -np.inf
        it = 0
        while True:
            if it >= max_iter:
                self.status = ITERATION_LIMIT
                return self.status
            if deadline is not None and it % 16 == 0 and time.monotonic() > deadline:
                self.status = TIME_LIMIT
                return self.status
            if self._since_refactor >= REFACTOR_EVERY:
                self._refactor()
            step = self._iterate(bland)
            if step is not None:
                self.status = step
                return step
            it += 1
            self.iterations += 1
            obj = float(self.cost @ self.x)
            if obj <= last_obj + 1e-12:
                stall += 1
                if stall > 100 + self.k:
                    bland = True
            else:
                stall = 0
                last_obj = obj

    def _iterate(self, bland: bool) -> Optional[str]:
        n, k = self.n, self.k
        if k == 0:
            return OPTIMAL
        xb = self.x[self.head]
        lb = self.lower[self.head]
        ub = self.upper[self.head]
        below = lb - xb
        above = xb - ub
        infeas = np.maximum(below, above)
        cand = infeas > PRIMAL_TOL * (1.0 + np.maximum(np.abs(lb), np.abs(ub)))
        if not cand.any():
            return OPTIMAL
        if bland:
            rows = np.nonzero(cand)[0]
            r = int(rows[np.argmin(self.head[rows])])
        else:
            rows = np.nonzero(cand)[0]
            B = self.Binv[rows]
            weights = np.einsum("ij,ij->i", B, B)
            r = int(rows[np.argmax(infeas[rows] ** 2 / weights)])
        leaving = int(self.head[r])
        up = above[r] > below[r]
        s = 1.0 if up else -1.0

        rho = self.Binv[r]
        alpha = np.empty(n + k)
        alpha[:n] = self._Acsc.T @ rho
        alpha[n:] = rho
        sa = s * alpha
        movable = ~self.is_basic & (self.lower != self.upper)
        elig = movable & (((~self.at_upper) & (sa > PIVOT_TOL)) | (self.at_upper & (sa < -PIVOT_TOL)))
        idx = np.nonzero(elig)[0]
        if idx.size == 0:
            return INFEASIBLE
        ratio = np.maximum(s * self.d[idx] / alpha[idx], 0.0)
        if bland:
            best = ratio.min()
            ties = idx[ratio <= best + 1e-12]
            q = int(ties.min())
        else:
            absa = np.abs(alpha[idx])
            relaxed = ratio + DUAL_TOL / absa
            theta_max = relaxed.min()
            ok = ratio <= theta_max
            q = int(idx[ok][np.argmax(absa[ok])])
        col = self._column(q)
        piv = col[r]
        if abs(piv) < PIVOT_TOL or abs(piv - alpha[q]) > 1e-6 * (1.0 + abs(piv)):
            if self._since_refactor == 0:
                raise LPError("numerically unstable pivot")
            self._refactor()
            return None
        theta = self.d[q] / alpha[q]
        target = self.upper[leaving] if up else self.lower[leaving]
        dq = (self.x[leaving] - target) / piv
        self.x[self.head] -= dq * col
        self.x[q] += dq
        self.x[leaving] = target
        self.d -= theta * alpha
        self.d[q] = 0.0
        self.d[leaving] = -theta
        self.is_basic[leaving] = False
        self.at_upper[leaving] = up
        self.is_basic[q] = True
        self.head[r] = q
        self.d[self.head] = 0.0
        row_r = self.Binv[r] / piv
        self.Binv = dger(-1.0, col, row_r, a=self.Binv, overwrite_a=True)
        self.Binv[r] = row_r
        self._since_refactor += 1
        return None
