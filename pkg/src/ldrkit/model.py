"""Core containers: robust problem data, linear decision rules, worst-case evaluation.

A problem instance stores a family of linear constraint rows

    sum_t a[i][t] . x_t  -  sum_t b[i][t] zeta_t  <=  c[i],    i = 1..m,

where x_t in R^n is the stage-t decision and zeta_t the stage-t uncertainty.
Row i = 0 is the objective; it has no right-hand side (the epigraph value c0
lives on the decision-rule side). Uncertainties range over a per-stage box
with the first stage pinned to the constant 1, which is how affine offsets
are encoded.

Conventions used across the package:
  * arrays are 0-indexed internally; index tuples (t, s, j) in public maps,
    names, and active sets are 1-based (stage t, period s, decision j);
  * a linear decision rule sets x_t = sum_{s<=t} y[t,s] * zeta_s.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

ROW_LABELS = (
    "objective",
    "capacity",
    "bound-ub",
    "bound-lb",
    "inventory-ub",
    "inventory-lb",
    "generic",
)

#: Guard for corner enumeration: at most 2**20 corners.
BRUTE_FORCE_MAX_FREE_STAGES = 20

DEFAULT_ZERO_TOL = 1e-9


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BoxUncertainty:
    """Per-stage interval [lower[s], upper[s]].

    The first interval is the degenerate point {1}: the constant component.
    Evaluators treat it like any other interval; the max over a point is the
    point, so no special casing is needed.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _readonly(self.lower)
        hi = _readonly(self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ValueError("lower/upper must be 1-D arrays of equal positive length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if lo[0] != 1.0 or hi[0] != 1.0:
            raise ValueError("stage-1 interval must be the point {1}")
        if lo.size > 1 and not np.all(lo[1:] < hi[1:]):
            raise ValueError("need lower[s] < upper[s] for every stage s >= 2")

    @property
    def horizon(self) -> int:
        return int(self.lower.size)


@dataclass(frozen=True)
class ROInstance:
    """A robust problem in row form, stored sparsely.

    Fields
    ------
    horizon : number of stages H (zeta_1..zeta_H)
    n       : decisions per stage
    a       : (m+1) x (H*n) CSR; entry (i, (t-1)*n + j-1) is a[i][t][j]
    b       : (m+1) x H CSR; entry (i, s-1) is b[i][s]
    c       : length-m array; c[i-1] is the rhs of row i (row 0 has none)
    box     : per-stage uncertainty intervals
    labels  : m+1 row labels; labels[0] == "objective"
    meta    : generator provenance (generator name, T, E, parameters)
    """

    horizon: int
    n: int
    a: sp.csr_matrix
    b: sp.csr_matrix
    c: np.ndarray
    box: BoxUncertainty
    labels: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        H, n = int(self.horizon), int(self.n)
        if H < 1 or n < 1:
            raise ValueError("horizon and n must be positive")
        a = sp.csr_matrix(self.a, dtype=float, copy=False)
        b = sp.csr_matrix(self.b, dtype=float, copy=False)
        c = _readonly(self.c)
        object.__setattr__(self, "horizon", H)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "labels", tuple(self.labels))
        m = c.size
        if a.shape != (m + 1, H * n):
            raise ValueError(f"a must be (m+1) x (H*n) = {(m+1, H*n)}, got {a.shape}")
        if b.shape != (m + 1, H):
            raise ValueError(f"b must be (m+1) x H = {(m+1, H)}, got {b.shape}")
        if self.box.horizon != H:
            raise ValueError("box horizon mismatch")
        if len(self.labels) != m + 1 or self.labels[0] != "objective":
            raise ValueError("need m+1 labels with labels[0] == 'objective'")
        bad = set(self.labels) - set(ROW_LABELS)
        if bad:
            raise ValueError(f"unknown row labels: {sorted(bad)}")
        for mat in (a, b):
            if mat.nnz and not np.isfinite(mat.data).all():
                raise ValueError("coefficients must be finite")
        if m and not np.isfinite(c).all():
            raise ValueError("right-hand sides must be finite")

    @property
    def m(self) -> int:
        return int(self.c.size)

    def col_of(self, t: int, j: int) -> int:
        """Flat column index of decision (stage t, component j), 1-based in."""
        if not (1 <= t <= self.horizon and 1 <= j <= self.n):
            raise IndexError(f"decision index ({t},{j}) outside H={self.horizon}, n={self.n}")
        return (t - 1) * self.n + (j - 1)

    def row_a_dense(self, i: int) -> np.ndarray:
        """Dense (H, n) array of a[i][t][j]."""
        return np.asarray(self.a[i].todense()).reshape(self.horizon, self.n)


@dataclass(frozen=True)
class LinearDecisionRule:
    """Sparse rule x_t = sum_{s<=t} y[t,s] zeta_s plus an optional epigraph value.

    entries maps 1-based (t, s, j) to y_{t,s,j}; only s <= t is allowed.
    """

    entries: dict
    c0: float | None = None

    def __post_init__(self):
        for (t, s, j), v in self.entries.items():
            if s > t or s < 1 or j < 1:
                raise ValueError(f"bad rule index (t={t}, s={s}, j={j})")
            if not math.isfinite(v):
                raise ValueError(f"non-finite coefficient at (t={t}, s={s}, j={j})")
        if self.c0 is not None and not math.isfinite(self.c0):
            raise ValueError("c0 must be finite")

    def max_abs(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def to_matrix(self, horizon: int, n: int) -> sp.csr_matrix:
        """(H*n) x H sparse matrix Y with Y[(t-1)*n+j-1, s-1] = y[t,s,j]."""
        rows, cols, vals = [], [], []
        for (t, s, j), v in self.entries.items():
            if t > horizon or j > n:
                raise IndexError(f"rule entry (t={t}, s={s}, j={j}) outside H={horizon}, n={n}")
            rows.append((t - 1) * n + (j - 1))
            cols.append(s - 1)
            vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(horizon * n, horizon))


@dataclass(frozen=True)
class WorstCaseReport:
    """Row-by-row worst-case values of a rule on an instance."""

    values: np.ndarray        # length m+1, index i
    violations: np.ndarray    # length m+1; values[i] - c[i] for i >= 1, 0 at i = 0
    feasible: bool
    objective: float          # values[0]
    tol: float


def filter_rule(ldr: LinearDecisionRule, max_t: int | None = None,
                decisions=None) -> LinearDecisionRule:
    """Sub-rule keeping entries with t <= max_t and/or j in decisions."""
    keep = {}
    dec = None if decisions is None else set(decisions)
    for (t, s, j), v in ldr.entries.items():
        if max_t is not None and t > max_t:
            continue
        if dec is not None and j not in dec:
            continue
        keep[(t, s, j)] = v
    return LinearDecisionRule(keep, c0=ldr.c0)


def _g_matrix(instance: ROInstance, ldr: LinearDecisionRule) -> np.ndarray:
    """Dense (m+1, H) matrix of g[i][s] = -b[i][s] + sum_{t>=s} a[i][t] . y[t,s].

    The restriction t >= s is implied by the rule (entries with s > t do not
    exist), so a plain matrix product applies.
    """
    Y = ldr.to_matrix(instance.horizon, instance.n)
    G = (instance.a @ Y).toarray()
    G -= instance.b.toarray()
    return G


def worst_case_row_value(instance: ROInstance, ldr: LinearDecisionRule, i: int) -> float:
    """Exact worst case of row i over the box, by stagewise separation.

    A linear function of independent interval variables maximizes one stage
    at a time: value = sum_s max(g[i][s] * lower[s], g[i][s] * upper[s]).
    """
    if not (0 <= i <= instance.m):
        raise IndexError(f"row {i} outside 0..{instance.m}")
    Y = ldr.to_matrix(instance.horizon, instance.n)
    g = np.asarray((instance.a[i] @ Y).todense()).ravel() - np.asarray(instance.b[i].todense()).ravel()
    return float(np.maximum(g * instance.box.lower, g * instance.box.upper).sum())


def brute_force_worst_case(instance: ROInstance, ldr: LinearDecisionRule, i: int) -> float:
    """Corner-enumeration oracle for the worst case of row i.

    Evaluates the row from the definition (plug each corner into the rule,
    then into the row) rather than the separable closed form, so the two
    implementations only agree if both are right. Guarded to 2**20 corners.
    """
    H, n = instance.horizon, instance.n
    if H - 1 > BRUTE_FORCE_MAX_FREE_STAGES:
        raise ValueError(f"horizon-too-large: {H - 1} free stages exceeds {BRUTE_FORCE_MAX_FREE_STAGES}")
    if not (0 <= i <= instance.m):
        raise IndexError(f"row {i} outside 0..{instance.m}")

    # dense y tensor y[t, s, j], zero where s > t
    Yt = np.zeros((H, H, n))
    for (t, s, j), v in ldr.entries.items():
        if t > H or j > n:
            raise IndexError(f"rule entry (t={t}, s={s}, j={j}) outside H={H}, n={n}")
        Yt[t - 1, s - 1, j - 1] = v
    a_row = instance.row_a_dense(i)                  # (H, n)
    b_row = np.asarray(instance.b[i].todense()).ravel()

    lo, hi = instance.box.lower, instance.box.upper
    free = H - 1
    best = -math.inf
    batch = 1 << 16
    for start in range(0, 1 << free, batch):
        count = min(batch, (1 << free) - start)
        codes = np.arange(start, start + count, dtype=np.int64)
        corners = np.empty((count, H))
        corners[:, 0] = 1.0
        for s in range(1, H):
            bit = (codes >> (s - 1)) & 1
            corners[:, s] = np.where(bit == 1, hi[s], lo[s])
        # x[c, t, j] = sum_s y[t, s, j] * zeta[c, s]
        x = np.einsum("tsj,cs->ctj", Yt, corners)
        vals = np.einsum("ctj,tj->c", x, a_row) - corners @ b_row
        best = max(best, float(vals.max()))
    return best


def check_feasibility(instance: ROInstance, ldr: LinearDecisionRule, tol: float) -> WorstCaseReport:
    """Worst-case report over all rows; feasible iff every violation <= tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    G = _g_matrix(instance, ldr)
    values = np.maximum(G * instance.box.lower, G * instance.box.upper).sum(axis=1)
    violations = np.zeros_like(values)
    if instance.m:
        violations[1:] = values[1:] - instance.c
    feasible = bool(violations.max(initial=0.0) <= tol)
    values = _readonly(values)
    violations = _readonly(violations)
    return WorstCaseReport(values=values, violations=violations, feasible=feasible,
                           objective=float(values[0]), tol=float(tol))


def count_nonzeros(ldr: LinearDecisionRule, zero_tol: float = DEFAULT_ZERO_TOL) -> int:
    """Entries with |y| above zero_tol * max(1, largest |entry|); c0 excluded."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    cut = zero_tol * max(1.0, ldr.max_abs())
    return sum(1 for v in ldr.entries.values() if abs(v) > cut)


def ldr_param_count(T: int, n: int) -> int:
    """Number of rule parameters over T stages with n decisions: n*T*(T+1)/2."""
    if T < 1 or n < 1:
        raise ValueError("T and n must be positive")
    return n * T * (T + 1) // 2


def sparsity_bound(kind: str, T: int, E: int | None = None,
                   delta: int | None = None, k: int | None = None) -> int:
    """Closed-form nonzero bound for an optimal rule of the given family.

    kinds and formulas (integer arithmetic):
      production_inventory: 2 + 8E + 10T + 6ET
      leadtime:             2 + 8E + 10T + 6E(T - delta), delta = min lead time
      newsvendor:           10 + 12T   (bounds the order-rule entries)
      budget:               2 + 8E + 10T + 6ET + 12kT
    """
    if T < 1:
        raise ValueError("invalid-parameter: T must be positive")
    if kind == "production_inventory":
        if E is None or E < 1:
            raise ValueError("invalid-parameter: need E >= 1")
        return 2 + 8 * E + 10 * T + 6 * E * T
    if kind == "leadtime":
        if E is None or E < 1:
            raise ValueError("invalid-parameter: need E >= 1")
        if delta is None or not (0 <= delta <= T):
            raise ValueError("invalid-parameter: need 0 <= delta <= T")
        return 2 + 8 * E + 10 * T + 6 * E * (T - delta)
    if kind == "newsvendor":
        return 10 + 12 * T
    if kind == "budget":
        if E is None or E < 1:
            raise ValueError("invalid-parameter: need E >= 1")
        if k is None or not (1 <= k <= T):
            raise ValueError("invalid-parameter: need 1 <= k <= T")
        return 2 + 8 * E + 10 * T + 6 * E * T + 12 * k * T
    raise ValueError(f"invalid-kind: {kind!r}")


def nonnegativity_rows_present(instance: ROInstance) -> bool:
    """Structural scan: every stage decision is forced nonnegative by some row.

    Accepts either an explicit lower-bound row per (t, j) (a single -1
    coefficient, label bound-lb) or, for epigraph-style decisions, a pair of
    rows labeled inventory-ub / inventory-lb that both carry a -1 on (t, j):
    together they force the decision above a max of two quantities that are
    nonnegative whenever the cost slopes are.
    """
    H, n = instance.horizon, instance.n
    lb_cols = set()
    pair_cols = {}
    for i, label in enumerate(instance.labels):
        if i == 0:
            continue
        row = instance.a[i]
        if label == "bound-lb" and row.nnz == 1 and row.data[0] == -1.0:
            lb_cols.add(int(row.indices[0]))
        elif label in ("inventory-ub", "inventory-lb"):
            for col, val in zip(row.indices, row.data):
                if val == -1.0:
                    pair_cols.setdefault(int(col), set()).add(label)
    for col in range(H * n):
        if col in lb_cols:
            continue
        if pair_cols.get(col) == {"inventory-ub", "inventory-lb"}:
            continue
        return False
    return True


# ---------------------------------------------------------------- JSON io

def instance_to_json_dict(instance: ROInstance) -> dict:
    """Sparse-triplet document; absent coefficients are zero. Row 0 omits "c"."""
    n = instance.n
    rows = []
    for i in range(instance.m + 1):
        arow = instance.a[i].tocoo()
        triplets = sorted(
            [[int(col // n) + 1, int(col % n) + 1, float(v)] for col, v in zip(arow.col, arow.data)]
        )
        brow = instance.b[i].tocoo()
        bpairs = sorted([[int(col) + 1, float(v)] for col, v in zip(brow.col, brow.data)])
        doc = {"i": i, "a": triplets, "b": bpairs, "label": instance.labels[i]}
        if i >= 1:
            doc["c"] = float(instance.c[i - 1])
        rows.append(doc)
    return {
        "horizon": instance.horizon,
        "n": instance.n,
        "m": instance.m,
        "box": {"lower": [float(v) for v in instance.box.lower],
                "upper": [float(v) for v in instance.box.upper]},
        "rows": rows,
        "meta": instance.meta,
    }


def instance_from_json_dict(doc: dict) -> ROInstance:
    H = int(doc["horizon"])
    n = int(doc["n"])
    m = int(doc["m"])
    rows = doc["rows"]
    if len(rows) != m + 1:
        raise ValueError(f"expected {m + 1} rows, found {len(rows)}")
    ar, ac, av = [], [], []
    br, bc, bv = [], [], []
    c = np.zeros(m)
    labels = [None] * (m + 1)
    for row in rows:
        i = int(row["i"])
        labels[i] = row["label"]
        for t, j, val in row["a"]:
            ar.append(i)
            ac.append((int(t) - 1) * n + int(j) - 1)
            av.append(float(val))
        for s, val in row["b"]:
            br.append(i)
            bc.append(int(s) - 1)
            bv.append(float(val))
        if i >= 1:
            c[i - 1] = float(row["c"])
    a = sp.csr_matrix((av, (ar, ac)), shape=(m + 1, H * n))
    b = sp.csr_matrix((bv, (br, bc)), shape=(m + 1, H))
    box = BoxUncertainty(np.asarray(doc["box"]["lower"]), np.asarray(doc["box"]["upper"]))
    return ROInstance(horizon=H, n=n, a=a, b=b, c=c, box=box,
                      labels=tuple(labels), meta=doc.get("meta", {}))


def save_instance(instance: ROInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json_dict(instance), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> ROInstance:
    with open(path) as fh:
        return instance_from_json_dict(json.load(fh))
