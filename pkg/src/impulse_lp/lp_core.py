"""Sparse linear programs: min c'z s.t. A z = b, G z <= h, z >= 0.

``solve`` runs a two-phase revised simplex with a dense LU factorization of
the basis, product-form updates between refactorizations, Dantzig pricing and
a switch to Bland's rule after a long run of degenerate pivots. Large
programs can be handed to HiGHS through ``method="highs"`` (or "auto").
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
OPT_TOL = 1e-9
ITER_CAP = 1_000_000
REFACTOR_EVERY = 50
AUTO_SIMPLEX_LIMIT = 20_000   # rows + cols up to which "auto" uses the simplex


class LPStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class LPNumericalError(RuntimeError):
    """The solver stalled or hit its iteration cap."""


def _csr(m, n_vars):
    if m is None:
        return sp.csr_matrix((0, n_vars))
    return sp.csr_matrix(m)


@dataclass
class SparseLP:
    objective: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix = None
    b_ub: np.ndarray = None
    names: Optional[Sequence[str]] = None
    row_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.size
        self.A_eq = _csr(self.A_eq, n)
        self.A_ub = _csr(self.A_ub, n)
        self.b_eq = np.asarray(self.b_eq if self.b_eq is not None else [], dtype=float)
        self.b_ub = np.asarray(self.b_ub if self.b_ub is not None else [], dtype=float)
        for A, b in ((self.A_eq, self.b_eq), (self.A_ub, self.b_ub)):
            if A.shape[1] != n or A.shape[0] != b.size:
                raise ValueError(f"shape mismatch: matrix {A.shape}, rhs {b.size}, vars {n}")
        self.A_eq.sum_duplicates()
        self.A_ub.sum_duplicates()

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_ub(self) -> int:
        return self.A_ub.shape[0]


@dataclass
class LPSolution:
    status: LPStatus
    primal: np.ndarray
    objective_value: float
    duals: np.ndarray            # equality rows first, then inequality rows
    iterations: int = 0
    method: str = ""
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def residuals(lp: SparseLP, sol: LPSolution) -> dict:
    """Primal feasibility, dual objective gap and complementary slackness."""
    z = sol.primal
    r_eq = lp.A_eq @ z - lp.b_eq
    r_ub = np.maximum(lp.A_ub @ z - lp.b_ub, 0.0)
    primal = max(np.abs(r_eq).max(initial=0.0), r_ub.max(initial=0.0), (-z).max(initial=0.0))
    y_eq, y_ub = sol.duals[:lp.n_eq], sol.duals[lp.n_eq:]
    reduced = lp.objective - lp.A_eq.T @ y_eq - lp.A_ub.T @ y_ub
    dual_obj = float(lp.b_eq @ y_eq + lp.b_ub @ y_ub)
    slack = lp.b_ub - lp.A_ub @ z
    comp = max(np.abs(reduced * z).max(initial=0.0), np.abs(y_ub * slack).max(initial=0.0))
    return {"primal": float(primal), "dual_infeas": float(max((-reduced).max(initial=0.0),
                                                           y_ub.max(initial=0.0))),
            "gap": abs(sol.objective_value - dual_obj), "dual_objective": dual_obj,
            "complementarity": float(comp)}


class _Basis:
    """Dense LU of the basis matrix plus a product-form eta file."""

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray):
        self.A = A
        self.basis = basis
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis].toarray()
        self.lu = la.lu_factor(B, check_finite=False)
        self.etas = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = la.lu_solve(self.lu, a, check_finite=False)
        for r, col in self.etas:
            xr = x[r] / col[r]
            x -= xr * col
            x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        y = c.astype(float).copy()
        for r, col in reversed(self.etas):
            # y' E^{-1}: only the r-th component changes
            y[r] = (y[r] - (y @ col - y[r] * col[r])) / col[r]
        return la.lu_solve(self.lu, y, trans=1, check_finite=False)

    def replace(self, r: int, q: int, d: np.ndarray):
        self.basis[r] = q
        self.etas.append((r, d.copy()))
        if len(self.etas) >= REFACTOR_EVERY:
            self.refactor()


def _simplex_phase(A, b, c, basis, allowed, iter_cap, counter):
    """Minimize c'z over Az=b, z>=0 from a feasible basis. Returns (status, basis)."""
    m, n = A.shape
    B = _Basis(A, basis)
    AT = A.T.tocsr()
    degenerate = 0
    bland = False
    bland_after = 10 * (m + n)
    x_B = B.ftran(b)
    while True:
        counter[0] += 1
        if counter[0] > iter_cap:
            raise LPNumericalError(f"simplex iteration cap {iter_cap} reached")
        y = B.btran(c[B.basis])
        reduced = c - AT @ y
        reduced[B.basis] = 0.0
        reduced[~allowed] = 0.0
        cand = np.flatnonzero(reduced < -OPT_TOL)
        if cand.size == 0:
            return "optimal", B.basis, x_B
        q = int(cand[0]) if bland else int(cand[np.argmin(reduced[cand])])
        d = B.ftran(A[:, q].toarray().ravel())
        pos = np.flatnonzero(d > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", B.basis, x_B
        ratios = np.maximum(x_B[pos], 0.0) / d[pos]
        tmin = ratios.min()
        ties = pos[ratios <= tmin + 1e-12]
        if bland:
            r = int(ties[np.argmin(B.basis[ties])])
        else:
            r = int(ties[np.argmax(d[ties])])
        step = max(x_B[r], 0.0) / d[r]
        if step <= FEAS_TOL:
            degenerate += 1
            if degenerate >= bland_after and not bland:
                log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                bland = True
        else:
            degenerate = 0
        x_B = x_B - step * d
        x_B[r] = step
        B.replace(r, q, d)
        if not B.etas:  # fresh factorization; recompute to shed drift
            x_B = B.ftran(b)


def _revised_simplex(lp: SparseLP, iter_cap: int = ITER_CAP) -> LPSolution:
    n = lp.n_vars
    m_eq, m_ub = lp.n_eq, lp.n_ub
    # standard form: [A_eq 0; A_ub I] [z; s] = [b_eq; b_ub]
    A = sp.bmat([[lp.A_eq, sp.csr_matrix((m_eq, m_ub))],
                 [lp.A_ub, sp.identity(m_ub, format="csr")]], format="csc")
    if A.shape[0] == 0:
        z = np.zeros(n)
        if np.any(lp.objective < 0):
            return LPSolution(LPStatus.UNBOUNDED, z, -np.inf, np.zeros(0), method="simplex")
        return LPSolution(LPStatus.OPTIMAL, z, 0.0, np.zeros(0), method="simplex")
    b = np.concatenate([lp.b_eq, lp.b_ub])
    c = np.concatenate([lp.objective, np.zeros(m_ub)])
    m, ns = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = sp.diags(sign) @ A
    A = A.tocsc()
    b = b * sign
    # initial basis: slacks where they are +1 columns, artificials elsewhere
    basis = np.empty(m, dtype=int)
    need_art = []
    for i in range(m):
        if i >= m_eq and sign[i] > 0:
            basis[i] = n + (i - m_eq)
        else:
            need_art.append(i)
    n_art = len(need_art)
    art_cols = sp.csc_matrix((np.ones(n_art), (need_art, np.arange(n_art))), shape=(m, n_art))
    A1 = sp.hstack([A, art_cols], format="csc")
    for j, i in enumerate(need_art):
        basis[i] = ns + j
    counter = [0]
    if n_art:
        c1 = np.concatenate([np.zeros(ns), np.ones(n_art)])
        allowed = np.ones(ns + n_art, dtype=bool)
        status, basis, x_B = _simplex_phase(A1, b, c1, basis, allowed, iter_cap, counter)
        infeas = float(c1[basis] @ x_B)
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LPSolution(LPStatus.INFEASIBLE, np.full(n, np.nan), np.nan,
                              np.full(m_eq + m_ub, np.nan), counter[0], "simplex")
        basis = _drive_out_artificials(A1, basis, ns)
    c2 = np.concatenate([c, np.zeros(n_art)])
    allowed = np.concatenate([np.ones(ns, dtype=bool), np.zeros(n_art, dtype=bool)])
    status, basis, x_B = _simplex_phase(A1, b, c2, basis, allowed, iter_cap, counter)
    if status == "unbounded":
        return LPSolution(LPStatus.UNBOUNDED, np.full(n, np.nan), -np.inf,
                          np.full(m_eq + m_ub, np.nan), counter[0], "simplex")
    full = np.zeros(ns + n_art)
    full[basis] = np.maximum(x_B, 0.0)
    Bmat = A1[:, basis].toarray()
    y = la.solve(Bmat.T, c2[basis]) * sign
    z = full[:n]
    return LPSolution(LPStatus.OPTIMAL, z, float(lp.objective @ z), y, counter[0], "simplex")


def _drive_out_artificials(A1, basis, ns):
    """Pivot zero-level artificials out of the basis where a real column allows it."""
    basis = basis.copy()
    for r in np.flatnonzero(basis >= ns):
        Bmat = A1[:, basis].toarray()
        e = np.zeros(len(basis))
        e[r] = 1.0
        row = la.solve(Bmat.T, e) @ A1[:, :ns]   # r-th row of B^{-1} A
        row = np.asarray(row).ravel()
        row[basis[basis < ns]] = 0.0
        j = np.flatnonzero(np.abs(row) > 1e-7)
        if j.size:
            basis[r] = int(j[np.argmax(np.abs(row[j]))])
        # otherwise the row is redundant and the artificial stays at zero
    return basis


def _highs(lp: SparseLP) -> LPSolution:
    n = lp.n_vars
    if lp.n_eq + lp.n_ub == 0:
        return _revised_simplex(lp)
    res = linprog(lp.objective,
                  A_ub=lp.A_ub if lp.n_ub else None, b_ub=lp.b_ub if lp.n_ub else None,
                  A_eq=lp.A_eq if lp.n_eq else None, b_eq=lp.b_eq if lp.n_eq else None,
                  bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": FEAS_TOL,
                           "dual_feasibility_tolerance": OPT_TOL})
    m = lp.n_eq + lp.n_ub
    if res.status == 2:
        return LPSolution(LPStatus.INFEASIBLE, np.full(n, np.nan), np.nan, np.full(m, np.nan),
                          method="highs")
    if res.status == 3:
        return LPSolution(LPStatus.UNBOUNDED, np.full(n, np.nan), -np.inf, np.full(m, np.nan),
                          method="highs")
    if res.status != 0:
        raise LPNumericalError(f"HiGHS failed: {res.message}")
    y_eq = res.eqlin.marginals if lp.n_eq else np.zeros(0)
    y_ub = res.ineqlin.marginals if lp.n_ub else np.zeros(0)
    z = np.maximum(res.x, 0.0)
    return LPSolution(LPStatus.OPTIMAL, z, float(lp.objective @ z),
                      np.concatenate([y_eq, y_ub]), int(res.nit), "highs")


def solve(lp: SparseLP, method: str = "auto", iter_cap: int = ITER_CAP) -> LPSolution:
    """Solve ``lp``. Infeasible and unbounded programs are reported in ``status``."""
    if method == "auto":
        method = "simplex" if lp.n_vars + lp.n_eq + lp.n_ub <= AUTO_SIMPLEX_LIMIT else "highs"
    if method == "simplex":
        return _revised_simplex(lp, iter_cap)
    if method == "highs":
        return _highs(lp)
    raise ValueError(f"unknown method {method!r}")


def _dec(x: float) -> str:
    s = format(Decimal(float(x)), "f")
    return s if "." not in s else s.rstrip("0").rstrip(".") or "0"


def to_mps(lp: SparseLP, name: str = "LP") -> str:
    """Free-format MPS text with every number written as its exact decimal value."""
    cols = [f"x{j}" for j in range(lp.n_vars)] if lp.names is None else list(lp.names)
    eq = [f"e{i}" for i in range(lp.n_eq)]
    ub = [f"u{i}" for i in range(lp.n_ub)]
    out = [f"NAME {name}", "ROWS", " N obj"]
    out += [f" E {r}" for r in eq] + [f" L {r}" for r in ub]
    out.append("COLUMNS")
    Aeq, Aub = lp.A_eq.tocsc(), lp.A_ub.tocsc()
    for j, cname in enumerate(cols):
        if lp.objective[j] != 0:
            out.append(f" {cname} obj {_dec(lp.objective[j])}")
        for M, rn in ((Aeq, eq), (Aub, ub)):
            for p in range(M.indptr[j], M.indptr[j + 1]):
                out.append(f" {cname} {rn[M.indices[p]]} {_dec(M.data[p])}")
        if lp.objective[j] == 0 and Aeq.indptr[j] == Aeq.indptr[j + 1] \
                and Aub.indptr[j] == Aub.indptr[j + 1]:
            out.append(f" {cname} obj 0")
    out.append("RHS")
    for rn, vals in ((eq, lp.b_eq), (ub, lp.b_ub)):
        for r, v in zip(rn, vals):
            if v != 0:
                out.append(f" rhs {r} {_dec(v)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def from_mps(text: str) -> SparseLP:
    """Parse the text written by ``to_mps``."""
    section, rows, cols = None, {}, {}
    obj, entries, rhs = {}, [], {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        tok = line.split()
        if section == "ROWS":
            if tok[0] != "N":
                rows[tok[1]] = tok[0]
        elif section == "COLUMNS":
            j = cols.setdefault(tok[0], len(cols))
            if tok[1] == "obj":
                obj[j] = float(tok[2])
            else:
                entries.append((tok[1], j, float(tok[2])))
        elif section == "RHS":
            rhs[tok[1]] = float(tok[2])
    eq = [r for r, k in rows.items() if k == "E"]
    ub = [r for r, k in rows.items() if k == "L"]
    n = len(cols)
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v

    def mat(names):
        idx = {r: i for i, r in enumerate(names)}
        trip = [(idx[r], j, v) for r, j, v in entries if r in idx]
        if not trip:
            return sp.csr_matrix((len(names), n))
        i, j, v = zip(*trip)
        return sp.csr_matrix((v, (i, j)), shape=(len(names), n))

    return SparseLP(c, mat(eq), np.array([rhs.get(r, 0.0) for r in eq]),
                    mat(ub), np.array([rhs.get(r, 0.0) for r in ub]),
                    names=list(cols))
