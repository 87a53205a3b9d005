"""Generic sparse LP container, solver front end, and MPS export.

Row dual convention (fixed across backends): the returned duals are those of
the internally minimized problem (a max objective is negated before the
solve). Concretely, the dual of a tight <= row is <= 0 for both senses, the
dual of an = row is free, and for max problems this means the textbook sign
is flipped. Consumers that map duals back to primal quantities are calibrated
against this convention once, by test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = math.inf

#: Bundled-simplex size guard; larger models get an explanatory error.
DESK_SCALE_NNZ = 200_000

LEQ = "<="
EQ = "="


class LPModel:
    """Immutable LP: sense, named bounded columns, named <=/= rows, CSR matrix."""

    def __init__(self, sense, col_names, col_lower, col_upper, col_obj,
                 row_names, row_senses, row_rhs, A: sp.csr_matrix):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self.col_names = list(col_names)
        self.col_lower = np.asarray(col_lower, dtype=float)
        self.col_upper = np.asarray(col_upper, dtype=float)
        self.col_obj = np.asarray(col_obj, dtype=float)
        self.row_names = list(row_names)
        self.row_senses = list(row_senses)
        self.row_rhs = np.asarray(row_rhs, dtype=float)
        self.A = sp.csr_matrix(A)
        nc, nr = len(self.col_names), len(self.row_names)
        if self.A.shape != (nr, nc):
            raise ValueError(f"matrix shape {self.A.shape} != (rows, cols) = {(nr, nc)}")
        for arr, size, what in ((self.col_lower, nc, "col_lower"), (self.col_upper, nc, "col_upper"),
                                (self.col_obj, nc, "col_obj"), (self.row_rhs, nr, "row_rhs")):
            if arr.shape != (size,):
                raise ValueError(f"{what} must have length {size}")
        if np.any(self.col_lower > self.col_upper):
            raise ValueError("need lower <= upper for every column")
        if self.A.nnz and not np.isfinite(self.A.data).all():
            raise ValueError("matrix coefficients must be finite")
        if nr and not np.isfinite(self.row_rhs).all():
            raise ValueError("right-hand sides must be finite")
        bad = set(self.row_senses) - {LEQ, EQ}
        if bad:
            raise ValueError(f"row senses must be '<=' or '=', got {sorted(bad)}")
        if len(set(self.col_names)) != nc or len(set(self.row_names)) != nr:
            raise ValueError("column and row names must be unique")
        self._col_index = None
        self._row_index = None

    @property
    def ncols(self) -> int:
        return len(self.col_names)

    @property
    def nrows(self) -> int:
        return len(self.row_names)

    @property
    def col_index(self) -> dict:
        if self._col_index is None:
            self._col_index = {name: i for i, name in enumerate(self.col_names)}
        return self._col_index

    @property
    def row_index(self) -> dict:
        if self._row_index is None:
            self._row_index = {name: i for i, name in enumerate(self.row_names)}
        return self._row_index

    def __repr__(self):
        return (f"LPModel({self.sense}, cols={self.ncols}, rows={self.nrows}, "
                f"nnz={self.A.nnz})")


class ModelBuilder:
    """Incremental LP assembly; zero coefficients are dropped on the floor."""

    def __init__(self, sense: str):
        self.sense = sense
        self.col_names, self.col_lower, self.col_upper, self.col_obj = [], [], [], []
        self.row_names, self.row_senses, self.row_rhs = [], [], []
        self._r, self._c, self._v = [], [], []

    def add_col(self, name: str, lo: float = 0.0, hi: float = INF, obj: float = 0.0) -> int:
        self.col_names.append(name)
        self.col_lower.append(lo)
        self.col_upper.append(hi)
        self.col_obj.append(obj)
        return len(self.col_names) - 1

    def add_row(self, name: str, sense: str, rhs: float) -> int:
        self.row_names.append(name)
        self.row_senses.append(sense)
        self.row_rhs.append(rhs)
        return len(self.row_names) - 1

    def add_coef(self, row: int, col: int, val: float):
        if val != 0.0:
            self._r.append(row)
            self._c.append(col)
            self._v.append(val)

    def add_coefs(self, rows, cols, vals):
        """Vectorized add_coef; zeros are dropped the same way."""
        vals = np.asarray(vals, dtype=float)
        keep = vals != 0.0
        self._r.extend(np.asarray(rows)[keep].tolist())
        self._c.extend(np.asarray(cols)[keep].tolist())
        self._v.extend(vals[keep].tolist())

    def build(self) -> LPModel:
        A = sp.csr_matrix((self._v, (self._r, self._c)),
                          shape=(len(self.row_names), len(self.col_names)))
        A.sum_duplicates()
        return LPModel(self.sense, self.col_names, self.col_lower, self.col_upper,
                       self.col_obj, self.row_names, self.row_senses, self.row_rhs, A)


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iters: int = 200_000
    pivot_rule: str = "dantzig-bland"
    require_vertex: bool = False

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class LPSolution:
    """Solve result. primal/row_duals align with model column/row order."""

    status: str                       # Optimal | Unbounded | Infeasible | IterationLimit
    primal: np.ndarray | None = None
    row_duals: np.ndarray | None = None
    objective: float | None = None
    is_vertex: bool = False
    iterations: int = 0
    reduced_costs: np.ndarray | None = None
    ray: np.ndarray | None = None     # improving direction when Unbounded

    def value_of(self, model: LPModel, name: str) -> float:
        return float(self.primal[model.col_index[name]])

    def dual_of(self, model: LPModel, name: str) -> float:
        return float(self.row_duals[model.row_index[name]])


class ModelTooLarge(ValueError):
    pass


def _solve_bundled(model: LPModel, opts: SolverOptions) -> LPSolution:
    if model.A.nnz > DESK_SCALE_NNZ:
        raise ModelTooLarge(
            f"model has {model.A.nnz} nonzeros, above the bundled desk-scale limit "
            f"of {DESK_SCALE_NNZ}; export it with write_mps() for an external "
            f"solver or pass backend='scipy'")
    from .simplex import solve_bounded_simplex
    return solve_bounded_simplex(model, opts)


def _solve_scipy(model: LPModel, opts: SolverOptions) -> LPSolution:
    """Adapter over scipy.optimize.linprog (HiGHS dual simplex).

    linprog minimizes, so a max objective is negated going in; the marginals
    it reports are then exactly the internal-min duals of our convention.
    """
    from scipy.optimize import linprog

    sign = 1.0 if model.sense == "min" else -1.0
    c = sign * model.col_obj
    senses = np.asarray([s == LEQ for s in model.row_senses])
    A = model.A.tocsr()
    A_ub = A[senses] if senses.any() else None
    b_ub = model.row_rhs[senses] if senses.any() else None
    A_eq = A[~senses] if (~senses).any() else None
    b_eq = model.row_rhs[~senses] if (~senses).any() else None
    bounds = [(lo if lo > -INF else None, hi if hi < INF else None)
              for lo, hi in zip(model.col_lower, model.col_upper)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs-ds", options={"maxiter": opts.max_iters})
    status_map = {0: "Optimal", 1: "IterationLimit", 2: "Infeasible", 3: "Unbounded"}
    status = status_map.get(res.status, "Infeasible")
    if status != "Optimal":
        return LPSolution(status=status, iterations=int(getattr(res, "nit", 0) or 0))
    duals = np.zeros(model.nrows)
    if A_ub is not None:
        duals[np.flatnonzero(senses)] = res.ineqlin.marginals
    if A_eq is not None:
        duals[np.flatnonzero(~senses)] = res.eqlin.marginals
    red = None
    if hasattr(res, "lower") and hasattr(res, "upper"):
        red = np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals)
    return LPSolution(status="Optimal", primal=np.asarray(res.x),
                      row_duals=duals, objective=float(sign * res.fun),
                      is_vertex=True, iterations=int(res.nit), reduced_costs=red)


BACKENDS = {
    "bundled": _solve_bundled,
    "scipy": _solve_scipy,
}


def solve(model: LPModel, opts: SolverOptions | None = None,
          backend: str = "bundled") -> LPSolution:
    """Solve an LPModel with the named backend (default the bundled simplex)."""
    if backend not in BACKENDS:
        raise KeyError(f"unknown backend {backend!r}; registered: {sorted(BACKENDS)}")
    return BACKENDS[backend](model, opts or SolverOptions())


# ------------------------------------------------------------------ MPS

def _sanitize(name: str) -> str:
    return name.replace("[", "_").replace("]", "").replace(",", "_")


def write_mps(model: LPModel) -> str:
    """Fixed-layout MPS text: NAME, ROWS, COLUMNS, RHS, BOUNDS, ENDATA.

    Names keep only alphanumerics plus '_' after a deterministic rewrite of
    '[', ']' and ','; a collision after rewriting is an error. Column order
    is insertion order. A max objective is flagged with an OBJSENSE section.
    """
    rows = [_sanitize(r) for r in model.row_names]
    cols = [_sanitize(c) for c in model.col_names]
    for orig, seen in ((model.row_names, rows), (model.col_names, cols)):
        if len(set(seen)) != len(seen):
            dupes = sorted({s for s in seen if seen.count(s) > 1})
            raise ValueError(f"name-collision after sanitization: {dupes[:5]}")
    if set(rows) & {"OBJ"}:
        raise ValueError("name-collision after sanitization: OBJ is reserved")

    out = ["NAME          LDRKIT"]
    if model.sense == "max":
        out.append("OBJSENSE")
        out.append("    MAX")
    out.append("ROWS")
    out.append(" N  OBJ")
    for name, sense in zip(rows, model.row_senses):
        out.append(f" {'L' if sense == LEQ else 'E'}  {name}")
    out.append("COLUMNS")
    csc = model.A.tocsc()
    for j, cname in enumerate(cols):
        if model.col_obj[j] != 0.0:
            out.append(f"    {cname:<10}  OBJ  {model.col_obj[j]:.17g}")
        start, end = csc.indptr[j], csc.indptr[j + 1]
        for r, v in zip(csc.indices[start:end], csc.data[start:end]):
            out.append(f"    {cname:<10}  {rows[r]:<10}  {v:.17g}")
    out.append("RHS")
    for name, rhs in zip(rows, model.row_rhs):
        if rhs != 0.0:
            out.append(f"    RHS  {name:<10}  {rhs:.17g}")
    out.append("BOUNDS")
    for j, cname in enumerate(cols):
        lo, hi = model.col_lower[j], model.col_upper[j]
        if lo == hi:
            out.append(f" FX BND  {cname:<10}  {lo:.17g}")
        elif lo == -INF and hi == INF:
            out.append(f" FR BND  {cname}")
        else:
            if lo == -INF:
                out.append(f" MI BND  {cname}")
            elif lo != 0.0:
                out.append(f" LO BND  {cname:<10}  {lo:.17g}")
            if hi < INF:
                out.append(f" UP BND  {cname:<10}  {hi:.17g}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
