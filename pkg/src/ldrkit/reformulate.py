"""LP builders: full robust counterpart, compact restrictions, and duals.

Every builder is a pure function from an instance (plus an active set and its
tuple index where applicable) to an immutable LPModel. Column and row names
carry the semantic indices: "y[t,s,j]", "lam[i]", "zeta[s,k]", "wub[s,k]",
"wlb[s,k]", "c0" for columns; "eq[t,s,j]", "cons[i]", "zub[s,k]", "zlb[s,k]"
plus the internal equalities "weq[...]" for rows. Downstream dual extraction
and MPS export rely on these names.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .lp import EQ, INF, LEQ, LPModel, ModelBuilder
from .model import ROInstance


class ActiveSet:
    """Immutable set of rule triples (t,s,j), 1-based, with s <= t <= horizon."""

    __slots__ = ("horizon", "n", "members", "_pairs")

    def __init__(self, horizon: int, n: int, members=()):
        if horizon < 1 or n < 1:
            raise ValueError("horizon and n must be positive")
        ms = frozenset((int(t), int(s), int(j)) for (t, s, j) in members)
        for (t, s, j) in ms:
            if not (1 <= s <= t <= horizon):
                raise ValueError(f"triple {(t, s, j)} violates 1 <= s <= t <= {horizon}")
            if not (1 <= j <= n):
                raise ValueError(f"triple {(t, s, j)} has j outside [1, {n}]")
        self.horizon = int(horizon)
        self.n = int(n)
        self.members = ms
        self._pairs = None

    @classmethod
    def full(cls, horizon: int, n: int) -> "ActiveSet":
        return cls(horizon, n, ((t, s, j)
                                for t in range(1, horizon + 1)
                                for s in range(1, t + 1)
                                for j in range(1, n + 1)))

    def pairs_at(self, s: int) -> tuple:
        """Sorted (t, j) pairs with (t, s, j) in the set."""
        if self._pairs is None:
            by_s = {}
            for (t, ss, j) in self.members:
                by_s.setdefault(ss, []).append((t, j))
            self._pairs = {ss: tuple(sorted(v)) for ss, v in by_s.items()}
        return self._pairs.get(s, ())

    def union(self, triples) -> "ActiveSet":
        return ActiveSet(self.horizon, self.n, self.members | set(triples))

    def difference(self, triples) -> "ActiveSet":
        return ActiveSet(self.horizon, self.n, self.members - set(triples))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, triple) -> bool:
        return tuple(triple) in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def __eq__(self, other) -> bool:
        return (isinstance(other, ActiveSet)
                and (self.horizon, self.n, self.members)
                == (other.horizon, other.n, other.members))

    def __hash__(self) -> int:
        return hash((self.horizon, self.n, self.members))

    def __repr__(self) -> str:
        return f"ActiveSet(horizon={self.horizon}, n={self.n}, size={len(self.members)})"


class TupleIndex:
    """Per-period grouping of constraint rows by their restricted data tuples.

    For period s, rows i and i' share a group k exactly when b[i,s] == b[i',s]
    and their coefficients agree on every active (t,s,j) (bitwise equality).
    pi[s-1][i] is the group of row i; reps_b[s-1][k] and reps_a[s-1][k, :]
    hold the representative data, columns of reps_a aligned with pairs_at(s).
    """

    __slots__ = ("active", "n_rows", "pairs", "pi", "reps_b", "reps_a", "counts")

    def __init__(self, active: ActiveSet, n_rows: int, pairs, pi, reps_b, reps_a):
        self.active = active
        self.n_rows = n_rows
        self.pairs = pairs          # tuple over s-1 of ((t, j), ...)
        self.pi = pi                # tuple over s-1 of int arrays, shape (m+1,)
        self.reps_b = reps_b        # tuple over s-1 of float arrays, shape (K_s,)
        self.reps_a = reps_a        # tuple over s-1 of float arrays, (K_s, len(pairs))
        self.counts = tuple(len(b) for b in reps_b)

    @property
    def total(self) -> int:
        """K^A, the total group count across periods."""
        return sum(self.counts)

    def zero_reps(self, s: int) -> np.ndarray:
        """Boolean mask over groups of period s whose tuple is identically zero."""
        b = self.reps_b[s - 1]
        a = self.reps_a[s - 1]
        mask = b == 0.0
        if a.shape[1]:
            mask = mask & np.all(a == 0.0, axis=1)
        return mask

    def groups_of(self, s: int) -> np.ndarray:
        return self.pi[s - 1]


def dedup_tuples(instance: ROInstance, active: ActiveSet) -> TupleIndex:
    """Group rows of each period by identical (b, active-coefficient) tuples."""
    if (active.horizon, active.n) != (instance.horizon, instance.n):
        raise ValueError("active set dimensions do not match the instance")
    H, n = instance.horizon, instance.n
    n_rows = instance.m + 1
    a_csc = instance.a.tocsc()
    b_dense = instance.b.toarray()

    pairs_all, pi_all, rb_all, ra_all = [], [], [], []
    for s in range(1, H + 1):
        pairs = active.pairs_at(s)
        if pairs:
            cols = [instance.col_of(t, j) for (t, j) in pairs]
            sub = np.asarray(a_csc[:, cols].todense())
        else:
            sub = np.zeros((n_rows, 0))
        key_mat = np.ascontiguousarray(
            np.column_stack([b_dense[:, s - 1], sub]))
        key_mat += 0.0  # fold -0.0 into +0.0 so equal values share a bit pattern
        seen: dict = {}
        pi = np.empty(n_rows, dtype=np.int64)
        rep_rows = []
        for i in range(n_rows):
            key = key_mat[i].tobytes()
            k = seen.get(key)
            if k is None:
                k = len(rep_rows)
                seen[key] = k
                rep_rows.append(i)
            pi[i] = k
        pairs_all.append(pairs)
        pi_all.append(pi)
        rb_all.append(key_mat[rep_rows, 0].copy())
        ra_all.append(key_mat[rep_rows, 1:].copy())
    return TupleIndex(active, n_rows, tuple(pairs_all), tuple(pi_all),
                      tuple(rb_all), tuple(ra_all))


def production_tuple_bound(T: int, E: int, active_size: int) -> int:
    """Group-count ceiling 4|A| + ET + 5T + E + 1 for production instances."""
    return 4 * active_size + E * T + 5 * T + E + 1


def _check_index(active: ActiveSet, idx: TupleIndex) -> None:
    if idx.active != active:
        raise ValueError("stale-index: tuple index was built for a different active set")


def _y_col_full(n: int, t: np.ndarray, s: np.ndarray, j: np.ndarray) -> np.ndarray:
    # position of y[t,s,j] among all triples sorted by (t, s, j)
    return n * (t - 1) * t // 2 + (s - 1) * n + (j - 1)


def _expand_periods(counts: np.ndarray) -> np.ndarray:
    """Concatenation of arange(1, c+1) for each c in counts."""
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total) - np.repeat(starts, counts) + 1


def build_rc_primal_full(instance: ROInstance) -> LPModel:
    """Full robust counterpart: every rule triple kept, one w pair per (row, period).

    min c0 subject to, for each row i,
        sum_s (ub_s * wub[i,s] - lb_s * wlb[i,s]) <= c_i   (cons[i]; -c0 for i=0)
        wub[i,s] - wlb[i,s] - sum_{t>=s,j} a[i,t,j] y[t,s,j] = -b[i,s]   (weq[i,s])
    with wub, wlb >= 0 and y, c0 free.
    """
    H, n, m = instance.horizon, instance.n, instance.m
    n_params = n * H * (H + 1) // 2
    nw = (m + 1) * H
    wub0 = 1 + n_params
    wlb0 = wub0 + nw
    ncols = 1 + n_params + 2 * nw

    col_names = ["c0"]
    col_names += [f"y[{t},{s},{j}]"
                  for t in range(1, H + 1)
                  for s in range(1, t + 1)
                  for j in range(1, n + 1)]
    col_names += [f"wub[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    col_names += [f"wlb[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    lower = np.full(ncols, -INF)
    lower[wub0:] = 0.0
    upper = np.full(ncols, INF)
    obj = np.zeros(ncols)
    obj[0] = 1.0

    row_names = [f"cons[{i}]" for i in range(m + 1)]
    row_names += [f"weq[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    senses = [LEQ] * (m + 1) + [EQ] * nw
    rhs = np.zeros((m + 1) * (1 + H))
    rhs[1:m + 1] = instance.c
    rhs[m + 1:] = -instance.b.toarray().ravel()

    w_pos = np.arange(nw)
    cons_of_w = np.repeat(np.arange(m + 1), H)
    dU = np.tile(instance.box.upper, m + 1)
    dL = np.tile(instance.box.lower, m + 1)
    weq0 = m + 1

    coo = instance.a.tocoo()
    keep = coo.data != 0.0
    ai = coo.row[keep]
    at = coo.col[keep] // n + 1
    aj = coo.col[keep] % n + 1
    av = coo.data[keep]
    s_arr = _expand_periods(at)
    y_rows = weq0 + np.repeat(ai, at) * H + (s_arr - 1)
    y_cols = 1 + _y_col_full(n, np.repeat(at, at), s_arr, np.repeat(aj, at))
    y_vals = -np.repeat(av, at)

    blocks_r, blocks_c, blocks_v = [], [], []

    def put(r, c, v):
        v = np.asarray(v, dtype=float)
        k = v != 0.0
        blocks_r.append(np.asarray(r)[k])
        blocks_c.append(np.asarray(c)[k])
        blocks_v.append(v[k])

    put([0], [0], [-1.0])                      # -c0 in the objective row
    put(cons_of_w, wub0 + w_pos, dU)
    put(cons_of_w, wlb0 + w_pos, -dL)
    put(weq0 + w_pos, wub0 + w_pos, np.ones(nw))
    put(weq0 + w_pos, wlb0 + w_pos, -np.ones(nw))
    put(y_rows, y_cols, y_vals)

    A = sp.coo_matrix(
        (np.concatenate(blocks_v),
         (np.concatenate(blocks_r), np.concatenate(blocks_c))),
        shape=(len(row_names), ncols)).tocsr()
    return LPModel("min", col_names, lower, upper, obj, row_names, senses, rhs, A)


def rc_primal_full_size(instance: ROInstance):
    """(columns, rows, nonzeros) of build_rc_primal_full without materializing it."""
    H, n, m = instance.horizon, instance.n, instance.m
    n_params = n * H * (H + 1) // 2
    nw = (m + 1) * H
    ncols = 1 + n_params + 2 * nw
    nrows = (m + 1) * (1 + H)
    coo = instance.a.tocoo()
    keep = coo.data != 0.0
    y_entries = int(((coo.col[keep] // n) + 1).sum())
    n_upper = int(np.count_nonzero(instance.box.upper))
    n_lower = int(np.count_nonzero(instance.box.lower))
    nnz = 1 + (m + 1) * (n_upper + n_lower) + 2 * nw + y_entries
    return ncols, nrows, nnz


def build_P_A(instance: ROInstance, active: ActiveSet, idx: TupleIndex) -> LPModel:
    """Compact primal: w pairs shared across rows with identical period tuples.

    Exactly 1 + |A| + 2*K^A columns and 1 + m + K^A rows.
    """
    _check_index(active, idx)
    H, n, m = instance.horizon, instance.n, instance.m
    mb = ModelBuilder("min")
    c0 = mb.add_col("c0", lo=-INF, hi=INF, obj=1.0)
    y_of = {}
    for (t, s, j) in active:
        y_of[(t, s, j)] = mb.add_col(f"y[{t},{s},{j}]", lo=-INF, hi=INF)
    wub_ids, wlb_ids = [], []
    for s in range(1, H + 1):
        ks = idx.counts[s - 1]
        wub_ids.append(np.asarray(
            [mb.add_col(f"wub[{s},{k}]", lo=0.0) for k in range(ks)], dtype=np.int64))
    for s in range(1, H + 1):
        ks = idx.counts[s - 1]
        wlb_ids.append(np.asarray(
            [mb.add_col(f"wlb[{s},{k}]", lo=0.0) for k in range(ks)], dtype=np.int64))

    cons_rows = np.arange(m + 1)
    for i in range(m + 1):
        mb.add_row(f"cons[{i}]", LEQ, 0.0 if i == 0 else float(instance.c[i - 1]))
    mb.add_coef(0, c0, -1.0)
    weq_ids = []
    for s in range(1, H + 1):
        rb = idx.reps_b[s - 1]
        weq_ids.append(np.asarray(
            [mb.add_row(f"weq[{s},{k}]", EQ, -float(rb[k])) for k in range(len(rb))],
            dtype=np.int64))

    for s in range(1, H + 1):
        pi = idx.pi[s - 1]
        mb.add_coefs(cons_rows, wub_ids[s - 1][pi],
                     np.full(m + 1, instance.box.upper[s - 1]))
        mb.add_coefs(cons_rows, wlb_ids[s - 1][pi],
                     np.full(m + 1, -instance.box.lower[s - 1]))
        ks = idx.counts[s - 1]
        mb.add_coefs(weq_ids[s - 1], wub_ids[s - 1], np.ones(ks))
        mb.add_coefs(weq_ids[s - 1], wlb_ids[s - 1], -np.ones(ks))
        ra = idx.reps_a[s - 1]
        if ra.size:
            kk, pp = np.nonzero(ra)
            pair_cols = np.asarray([y_of[(t, s, j)] for (t, j) in idx.pairs[s - 1]],
                                   dtype=np.int64)
            mb.add_coefs(weq_ids[s - 1][kk], pair_cols[pp], -ra[kk, pp])
    return mb.build()


def build_D_A(instance: ROInstance, active: ActiveSet, idx: TupleIndex,
              M: float | None = None, drop_zero_tuples: bool = True) -> LPModel:
    """Compact dual of the restricted problem.

    max  -sum_i c_i lam[i] - sum_{s,k} b_rep[s,k] zeta[s,k]
    s.t. sum_k a_rep[s,k,(t,j)] zeta[s,k] = 0      for (t,s,j) active   (eq)
         zeta[s,k] - ub_s * sum_{pi(i)=k} lam[i] <= 0                  (zub)
         lb_s * sum_{pi(i)=k} lam[i] - zeta[s,k] <= 0                  (zlb)
    with lam[0] fixed at 1 and lam[i] in [0, M] (M omitted: unbounded above).
    Groups whose representative tuple is identically zero get no bound rows
    and their zeta column is pinned at 0; pass drop_zero_tuples=False to keep
    every bound row (used to check that the removal never changes the optimum).
    """
    _check_index(active, idx)
    if M is not None and M <= 0:
        raise ValueError("M must be positive")
    H, m = instance.horizon, instance.m
    lam_hi = INF if M is None else float(M)
    mb = ModelBuilder("max")
    for i in range(m + 1):
        if i == 0:
            mb.add_col("lam[0]", lo=1.0, hi=1.0)
        else:
            mb.add_col(f"lam[{i}]", lo=0.0, hi=lam_hi, obj=-float(instance.c[i - 1]))
    lam_cols = np.arange(m + 1)
    zeta_ids, kept_masks = [], []
    for s in range(1, H + 1):
        rb = idx.reps_b[s - 1]
        kept = ~idx.zero_reps(s) if drop_zero_tuples else np.ones(len(rb), dtype=bool)
        kept_masks.append(kept)
        ids = np.empty(len(rb), dtype=np.int64)
        for k in range(len(rb)):
            if kept[k]:
                ids[k] = mb.add_col(f"zeta[{s},{k}]", lo=-INF, hi=INF, obj=-float(rb[k]))
            else:
                ids[k] = mb.add_col(f"zeta[{s},{k}]", lo=0.0, hi=0.0)
        zeta_ids.append(ids)

    eq_rows = {}
    for (t, s, j) in active:
        eq_rows[(t, s, j)] = mb.add_row(f"eq[{t},{s},{j}]", EQ, 0.0)
    zub_ids, zlb_ids = [], []
    for s in range(1, H + 1):
        kept = kept_masks[s - 1]
        ub_ids = np.full(len(kept), -1, dtype=np.int64)
        lb_ids = np.full(len(kept), -1, dtype=np.int64)
        for k in range(len(kept)):
            if kept[k]:
                ub_ids[k] = mb.add_row(f"zub[{s},{k}]", LEQ, 0.0)
                lb_ids[k] = mb.add_row(f"zlb[{s},{k}]", LEQ, 0.0)
        zub_ids.append(ub_ids)
        zlb_ids.append(lb_ids)

    for s in range(1, H + 1):
        ra = idx.reps_a[s - 1]
        if ra.size:
            kk, pp = np.nonzero(ra)
            pairs = idx.pairs[s - 1]
            row_ids = np.asarray([eq_rows[(t, s, j)] for (t, j) in pairs],
                                 dtype=np.int64)
            mb.add_coefs(row_ids[pp], zeta_ids[s - 1][kk], ra[kk, pp])
        pi = idx.pi[s - 1]
        kept_row = kept_masks[s - 1][pi]
        ub_s = instance.box.upper[s - 1]
        lb_s = instance.box.lower[s - 1]
        mb.add_coefs(zub_ids[s - 1][pi[kept_row]], lam_cols[kept_row],
                     np.full(int(kept_row.sum()), -ub_s))
        mb.add_coefs(zlb_ids[s - 1][pi[kept_row]], lam_cols[kept_row],
                     np.full(int(kept_row.sum()), lb_s))
        kept = kept_masks[s - 1]
        mb.add_coefs(zub_ids[s - 1][kept], zeta_ids[s - 1][kept],
                     np.ones(int(kept.sum())))
        mb.add_coefs(zlb_ids[s - 1][kept], zeta_ids[s - 1][kept],
                     -np.ones(int(kept.sum())))
    return mb.build()


def build_rc_dual(instance: ROInstance) -> LPModel:
    """Dual of the full robust counterpart, one zeta per (row, period).

    max  -sum_i c_i lam[i] - sum_{i,s} b[i,s] zeta[i,s]
    s.t. sum_i a[i,t,j] zeta[i,s] = 0   for every triple s <= t   (eq[t,s,j])
         zeta[i,s] - ub_s lam[i] <= 0                             (zub[i,s])
         lb_s lam[i] - zeta[i,s] <= 0                             (zlb[i,s])
    with lam[0] = 1, lam[i] >= 0, zeta free.
    """
    H, n, m = instance.horizon, instance.n, instance.m
    n_eq = n * H * (H + 1) // 2
    nz = (m + 1) * H
    zeta0 = m + 1

    b_dense = instance.b.toarray()
    col_names = [f"lam[{i}]" for i in range(m + 1)]
    col_names += [f"zeta[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    ncols = m + 1 + nz
    lower = np.zeros(ncols)
    lower[0] = 1.0
    lower[zeta0:] = -INF
    upper = np.full(ncols, INF)
    upper[0] = 1.0
    obj = np.zeros(ncols)
    obj[1:m + 1] = -instance.c
    obj[zeta0:] = -b_dense.ravel()

    row_names = [f"eq[{t},{s},{j}]"
                 for t in range(1, H + 1)
                 for s in range(1, t + 1)
                 for j in range(1, n + 1)]
    row_names += [f"zub[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    row_names += [f"zlb[{i},{s}]" for i in range(m + 1) for s in range(1, H + 1)]
    senses = [EQ] * n_eq + [LEQ] * (2 * nz)
    rhs = np.zeros(n_eq + 2 * nz)

    coo = instance.a.tocoo()
    keep = coo.data != 0.0
    ai = coo.row[keep]
    at = coo.col[keep] // n + 1
    aj = coo.col[keep] % n + 1
    av = coo.data[keep]
    s_arr = _expand_periods(at)
    eq_r = _y_col_full(n, np.repeat(at, at), s_arr, np.repeat(aj, at))
    eq_c = zeta0 + np.repeat(ai, at) * H + (s_arr - 1)
    eq_v = np.repeat(av, at)

    z_pos = np.arange(nz)
    lam_of_z = np.repeat(np.arange(m + 1), H)
    dU = np.tile(instance.box.upper, m + 1)
    dL = np.tile(instance.box.lower, m + 1)

    blocks_r, blocks_c, blocks_v = [], [], []

    def put(r, c, v):
        v = np.asarray(v, dtype=float)
        k = v != 0.0
        blocks_r.append(np.asarray(r)[k])
        blocks_c.append(np.asarray(c)[k])
        blocks_v.append(v[k])

    put(eq_r, eq_c, eq_v)
    put(n_eq + z_pos, zeta0 + z_pos, np.ones(nz))            # zub: +zeta
    put(n_eq + z_pos, lam_of_z, -dU)                          # zub: -ub lam
    put(n_eq + nz + z_pos, zeta0 + z_pos, -np.ones(nz))       # zlb: -zeta
    put(n_eq + nz + z_pos, lam_of_z, dL)                      # zlb: +lb lam
    A = sp.coo_matrix(
        (np.concatenate(blocks_v),
         (np.concatenate(blocks_r), np.concatenate(blocks_c))),
        shape=(len(row_names), ncols)).tocsr()
    return LPModel("max", col_names, lower, upper, obj, row_names, senses, rhs, A)


def model_size(model: LPModel):
    """(columns, rows, stored nonzero coefficients) of an LPModel."""
    return model.ncols, model.nrows, int(np.count_nonzero(model.A.data))
