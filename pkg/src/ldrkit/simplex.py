"""Bounded-variable revised simplex with a sparse LU basis and eta updates.

Always minimizes internally; a max objective is negated on the way in and the
objective value flipped on the way out. Row duals are reported for the
internal minimization, which is the package-wide convention.

Outline: convert rows to equalities with slacks ([0, inf) for <= rows),
give every = row, and every <= row whose initial slack would be negative, a
phase-1 artificial; minimize the artificial sum; then reprice with the real
costs. The basis inverse is a scipy splu factorization composed with
product-form eta vectors, refactorized periodically.
"""
from __future__ import annotations

import math
import os
import warnings

import numpy as np

_DEBUG = bool(os.environ.get("SIMPLEX_DEBUG"))
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lp import EQ, INF, LEQ, LPModel, LPSolution, SolverOptions

AT_LO, AT_HI, BASIC, FREE_NB, FIXED_NB = 0, 1, 2, 3, 4

REFACTOR_EVERY = 50
PIVOT_TOL = 1e-9


class _Basis:
    """B = LU . E_1 ... E_k; ftran solves B x = v, btran solves B^T y = c."""

    def __init__(self, Acsc: sp.csc_matrix, basis: np.ndarray):
        self.Acsc = Acsc
        self.m = Acsc.shape[0]
        self.etas = []
        self.refactor(basis)

    def refactor(self, basis: np.ndarray):
        self.etas = []
        if self.m == 0:
            self.lu = None
            self.B = None
            self.dense = None
            return
        B = self.Acsc[:, basis].tocsc()
        self.B = B
        try:
            self.lu = splu(B)
            self.dense = None
        except RuntimeError:
            # splu refuses on exact elimination cancellation even when the
            # matrix is invertible; dense partial pivoting never does, and
            # the backward-error probe judges the result either way
            if self.m > 4000:
                raise
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self.dense = scipy.linalg.lu_factor(B.toarray(), check_finite=False)
            self.lu = None

    def _base_solve(self, v: np.ndarray, trans: str = "N") -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(v, trans=trans)
        return scipy.linalg.lu_solve(
            self.dense, v, trans=0 if trans == "N" else 1, check_finite=False
        )

    def residual_probe(self) -> float:
        """Backward error of one solve B z = v for a fixed generic v.

        Stays near machine epsilon for any stable factorization, however
        ill-conditioned the basis; it only blows up when the factor itself is
        broken (e.g. a factorization of a singular matrix).
        """
        if self.m == 0:
            return 0.0
        v = np.cos(np.arange(self.m, dtype=float))
        z = self._base_solve(v)
        if not np.all(np.isfinite(z)):
            return INF
        num = float(np.abs(self.B @ z - v).max())
        den = float(np.abs(self.B).sum(axis=1).max()) * float(np.abs(z).max()) + 1.0
        return num / den

    def ftran(self, v: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return v.copy()
        u = self._base_solve(v)
        for p, w, wp in self.etas:
            t = u[p] / wp
            if t != 0.0:
                u -= w * t
            u[p] = t
        return u

    def btran(self, c: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return c.copy()
        z = c.copy()
        for p, w, wp in reversed(self.etas):
            zp = z[p]
            dot = w @ z
            z[p] = (zp - (dot - wp * zp)) / wp
        return self._base_solve(z, trans="T")

    def push_eta(self, p: int, w: np.ndarray):
        self.etas.append((p, w.copy(), w[p]))

    @property
    def n_etas(self) -> int:
        return len(self.etas)


def _gmean_row_scales(Aabs: sp.csr_matrix) -> np.ndarray:
    """Per-row 1/sqrt(max*min) over nonzero magnitudes; empty rows get 1."""
    out = np.ones(Aabs.shape[0])
    if Aabs.nnz:
        ptr = Aabs.indptr
        rows = np.flatnonzero(np.diff(ptr) > 0)
        mx = np.maximum.reduceat(Aabs.data, ptr[rows])
        mn = np.minimum.reduceat(Aabs.data, ptr[rows])
        out[rows] = 1.0 / np.sqrt(mx * mn)
    return out


def _equilibrate(A: sp.csr_matrix):
    """Geometric-mean equilibration, rounded to powers of two.

    Power-of-two scales keep every scaled coefficient, bound, and recovered
    solution value exact in floating point; only the conditioning changes.
    """
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    if m == 0 or n == 0 or A.nnz == 0:
        return R, C
    W = A.copy().tocsr()
    W.data = np.abs(W.data)
    for _ in range(2):
        r = _gmean_row_scales(W)
        W = sp.diags(r) @ W
        R *= r
        Wc = W.T.tocsr()
        c = _gmean_row_scales(Wc)
        W = (sp.diags(c) @ Wc).T.tocsr()
        C *= c
    R = np.exp2(np.rint(np.log2(R)))
    C = np.exp2(np.rint(np.log2(C)))
    return R, C


def solve_bounded_simplex(model: LPModel, opts: SolverOptions) -> LPSolution:
    R, C = _equilibrate(model.A)
    plain = bool(np.all(R == 1.0) and np.all(C == 1.0))
    if plain:
        return _simplex_core(model, opts)
    with np.errstate(invalid="ignore"):
        lo_s = np.where(np.isfinite(model.col_lower), model.col_lower / C,
                        model.col_lower)
        hi_s = np.where(np.isfinite(model.col_upper), model.col_upper / C,
                        model.col_upper)
    scaled = LPModel(
        sense=model.sense,
        col_names=model.col_names,
        col_lower=lo_s,
        col_upper=hi_s,
        col_obj=model.col_obj * C,
        row_names=model.row_names,
        row_senses=model.row_senses,
        row_rhs=model.row_rhs * R,
        A=sp.diags(R) @ model.A @ sp.diags(C),
    )
    sol = _simplex_core(scaled, opts)
    primal = sol.primal * C if sol.primal is not None else None
    row_duals = sol.row_duals * R if sol.row_duals is not None else None
    reduced = sol.reduced_costs / C if sol.reduced_costs is not None else None
    ray = sol.ray * C if sol.ray is not None else None
    return LPSolution(
        status=sol.status,
        primal=primal,
        row_duals=row_duals,
        objective=sol.objective,
        is_vertex=sol.is_vertex,
        iterations=sol.iterations,
        reduced_costs=reduced,
        ray=ray,
    )


def _simplex_core(model: LPModel, opts: SolverOptions) -> LPSolution:
    m = model.nrows
    n_struct = model.ncols
    sign = 1.0 if model.sense == "min" else -1.0

    lo = list(model.col_lower)
    hi = list(model.col_upper)
    cols = [model.A.tocsc()]
    b = model.row_rhs.copy()

    # slacks for <= rows
    leq_rows = [r for r, s in enumerate(model.row_senses) if s == LEQ]
    slack_of = {}
    if leq_rows:
        data = np.ones(len(leq_rows))
        S = sp.csc_matrix((data, (leq_rows, np.arange(len(leq_rows)))),
                          shape=(m, len(leq_rows)))
        cols.append(S)
        for k, r in enumerate(leq_rows):
            slack_of[r] = n_struct + k
            lo.append(0.0)
            hi.append(INF)

    # anti-degeneracy: inequality rows run with a tiny deterministic
    # relaxation of the rhs, which splits the massively degenerate vertices
    # these models produce; once the relaxed problem is optimal, the rhs is
    # tightened back to the exact data in a few steps, each re-optimized
    # from the warm basis, so the reported optimum carries no perturbation
    b_true = b.copy()
    relax_eps = np.zeros(m)
    if leq_rows:
        rng_rel = np.random.default_rng(151)
        lr = np.asarray(leq_rows, dtype=np.int64)
        relax_eps[lr] = 1e-7 * (1.0 + np.abs(b[lr])) * rng_rel.uniform(0.5, 1.5, lr.size)
        b += relax_eps
    relax_scale = [1.0 if leq_rows else 0.0]

    # initial nonbasic value of every structural column
    x0 = np.empty(n_struct + len(leq_rows))
    for j in range(n_struct):
        if model.col_lower[j] > -INF:
            x0[j] = model.col_lower[j]
        elif model.col_upper[j] < INF:
            x0[j] = model.col_upper[j]
        else:
            x0[j] = 0.0
    x0[n_struct:] = 0.0
    resid = b - sp.hstack(cols, format="csr") @ x0 if m else np.zeros(0)

    # artificials: every = row; every <= row starting infeasible
    art_rows, art_signs = [], []
    basis = np.empty(m, dtype=np.int64)
    n_slacks = len(leq_rows)
    next_col = n_struct + n_slacks
    for r in range(m):
        if model.row_senses[r] == LEQ and resid[r] >= 0.0:
            basis[r] = slack_of[r]
        else:
            art_rows.append(r)
            art_signs.append(1.0 if resid[r] >= 0.0 else -1.0)
            basis[r] = next_col
            next_col += 1
            lo.append(0.0)
            hi.append(INF)
    if art_rows:
        Art = sp.csc_matrix((np.asarray(art_signs), (art_rows, np.arange(len(art_rows)))),
                            shape=(m, len(art_rows)))
        cols.append(Art)

    Afull = sp.hstack(cols, format="csc") if m else sp.csc_matrix((0, n_struct))
    AfullT = Afull.T.tocsr()
    ncols = Afull.shape[1]
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n_art = ncols - n_struct - n_slacks

    x = np.empty(ncols)
    x[: n_struct + n_slacks] = x0
    vstat = np.full(ncols, AT_LO, dtype=np.int8)
    for j in range(n_struct):
        if lo[j] == hi[j]:
            vstat[j] = FIXED_NB
        elif lo[j] > -INF:
            vstat[j] = AT_LO
        elif hi[j] < INF:
            vstat[j] = AT_HI
        else:
            vstat[j] = FREE_NB
    x[n_struct + n_slacks:] = 0.0
    for r, colid in enumerate(basis):
        vstat[colid] = BASIC
        x[colid] = abs(resid[r]) if colid >= n_struct + n_slacks else resid[r]

    c_phase1 = np.zeros(ncols)
    if n_art:
        c_phase1[n_struct + n_slacks:] = 1.0
    c_phase2 = np.zeros(ncols)
    c_phase2[:n_struct] = sign * model.col_obj

    basis_obj = _Basis(Afull, basis) if m else _Basis(sp.csc_matrix((0, 0)), basis)

    iters = [0]

    # unit column available for every row (slack for <=, artificial for =),
    # used to patch rank-deficient bases
    unit_col = np.full(m, -1, dtype=np.int64)
    for r, sc in slack_of.items():
        unit_col[r] = sc
    for k, r in enumerate(art_rows):
        if unit_col[r] < 0:
            unit_col[r] = n_struct + n_slacks + k

    # a <= row that starts infeasible carries both a slack and an artificial;
    # the pair is exactly parallel, so with one basic the other must never
    # enter, or the basis turns exactly singular
    unit_alt = np.full(m, -1, dtype=np.int64)
    partner = np.full(ncols, -1, dtype=np.int64)
    art_of = np.full(m, -1, dtype=np.int64)
    for k, r in enumerate(art_rows):
        art_of[r] = n_struct + n_slacks + k
        sc = slack_of.get(r, -1)
        if sc >= 0:
            ac = n_struct + n_slacks + k
            unit_alt[r] = ac
            partner[ac] = sc
            partner[sc] = ac
    has_partner = np.flatnonzero(partner >= 0)

    # <= rows whose structural parts are exact negatives share a single
    # normal direction; once every unit column of such a pair is nonbasic
    # the basis is structurally singular, so the ratio test must keep one
    twin_row = np.full(m, -1, dtype=np.int64)
    unit_row = np.full(ncols, -1, dtype=np.int64)
    if m:
        for r, sc in slack_of.items():
            unit_row[sc] = r
        for r in range(m):
            if art_of[r] >= 0:
                unit_row[art_of[r]] = r
        Astruct = Afull[:, :n_struct].tocsr()
        seen: dict = {}
        for r in range(m):
            if model.row_senses[r] != LEQ:
                continue
            sl = slice(Astruct.indptr[r], Astruct.indptr[r + 1])
            if sl.start == sl.stop:
                continue
            idxs = Astruct.indices[sl].tobytes()
            vals = Astruct.data[sl]
            neg_key = (idxs, (-vals).tobytes())
            r2 = seen.pop(neg_key, None)
            if r2 is not None:
                twin_row[r] = r2
                twin_row[r2] = r
            else:
                seen[(idxs, vals.tobytes())] = r
        del seen

    def _twin_covered(leaving_col: int, entering_col: int) -> bool:
        """False only when removing this unit column would leave its twin-row
        direction with no unit column in the basis."""
        r = int(unit_row[leaving_col])
        if r < 0:
            return True
        r2 = int(twin_row[r])
        if r2 < 0:
            return True
        for cc in (slack_of.get(r, -1), art_of[r], slack_of.get(r2, -1), art_of[r2]):
            if cc >= 0 and cc != leaving_col:
                if cc == entering_col or vstat[cc] == BASIC:
                    return True
        return False

    def recompute_basics():
        if m == 0:
            return
        x_nb = x.copy()
        x_nb[basis] = 0.0
        rhs_eff = b - Afull @ x_nb
        x[basis] = basis_obj.ftran(rhs_eff)

    def _make_nonbasic(out: int):
        if lo[out] == hi[out]:
            x[out] = lo[out]
            vstat[out] = FIXED_NB
        elif lo[out] == -INF and hi[out] == INF:
            # free column: leave its value alone, no displacement at all
            vstat[out] = FREE_NB
        elif hi[out] == INF or (lo[out] > -INF and x[out] - lo[out] <= hi[out] - x[out]):
            x[out] = lo[out]
            vstat[out] = AT_LO
        else:
            x[out] = hi[out]
            vstat[out] = AT_HI

    def repair_basis(drop_tol: float, force: bool = False) -> bool:
        """Swap a numerically dependent basis cluster for unit columns.

        Tiny diagonals of U mark a dependent cluster of basis columns; exact
        zeros and near-zeros usually belong together, so the whole cluster at
        `drop_tol` leaves in one pass.  Replacement rows come from a
        rank-revealing pass over the left near-null space, which inverse
        iteration recovers from the bumped factorization.
        """
        if m > 8000:
            return False
        B = Afull[:, basis].toarray()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu_d, piv = scipy.linalg.lu_factor(B, check_finite=False)
        dd = np.abs(np.diag(lu_d))
        scale = max(1.0, float(dd.max()))
        tiny = np.flatnonzero(dd <= scale * drop_tol)
        if _DEBUG:
            print(f"[repair] m={m} tol={drop_tol:.0e} dd.max={dd.max():.3e} "
                  f"tiny={tiny.size} smallest={np.sort(dd)[:5]}")
        if tiny.size == 0 and not force:
            return False
        # bump dead pivots so the triangular solves stay finite; inverse
        # iteration then amplifies exactly the directions they stood for
        bump = scale * 1e-12
        for k in tiny:
            lu_d[k, k] = bump if lu_d[k, k] >= 0.0 else -bump
        rng = np.random.default_rng(7)
        Z = rng.standard_normal((m, min(m, tiny.size + 8)))
        for _ in range(3):
            Z = scipy.linalg.lu_solve((lu_d, piv), Z, trans=1, check_finite=False)
            if not np.all(np.isfinite(Z)):
                return False
            Z, _ = np.linalg.qr(Z)
        # keep genuine left-null directions; surplus probe columns come back
        # with large residuals and would only misdirect the swap below
        resid_nrm = np.linalg.norm(B.T @ Z, axis=0)
        keep = resid_nrm <= scale * 1e-10
        if not keep.any() and force:
            # the factorization refused a basis that is merely ill
            # conditioned; one swap along the weakest direction unsticks it
            keep[int(np.argmin(resid_nrm))] = True
        Z = Z[:, keep]
        d_true = Z.shape[1]
        if _DEBUG:
            print(f"[repair]   null dim={d_true} resid={np.sort(resid_nrm)[:4]}")
        if d_true == 0:
            return False
        # the d_true most dependent columns leave; covering that exact null
        # space with units then restores full rank
        tiny = np.argsort(dd)[:d_true]
        in_basis = set(basis.tolist())
        ok_rows = np.array(
            [
                r
                for r in range(m)
                if unit_col[r] >= 0
                and unit_col[r] not in in_basis
                and (unit_alt[r] < 0 or unit_alt[r] not in in_basis)
            ],
            dtype=np.int64,
        )
        if ok_rows.size == 0:
            return False
        # maximal-volume row subset of the null space among admissible rows
        _, rfac, prow = scipy.linalg.qr(
            Z[ok_rows, :].T, mode="economic", pivoting=True, check_finite=False
        )
        rdiag = np.abs(np.diag(np.atleast_2d(rfac)))
        n_pick = int(np.count_nonzero(rdiag > 1e-8)) if rdiag.size else 0
        rows_pick = ok_rows[prow[:n_pick]]
        n_swap = min(tiny.size, rows_pick.size)
        if n_swap == 0:
            return False
        changed = False
        for k, r_new in zip(tiny[:n_swap], rows_pick[:n_swap]):
            out = int(basis[k])
            uc = int(unit_col[r_new])
            if _DEBUG:
                print(f"[repair]   k={k} out={out} r={int(r_new)} uc={uc}")
            _make_nonbasic(out)
            basis[k] = uc
            vstat[uc] = BASIC
            changed = True
        return changed

    def rebuild_basis() -> bool:
        """Re-select a full-rank basis from scratch.

        Rank-revealing QR over the incumbent basis columns plus every unit
        column; units are scaled far down so pivoting keeps incumbents and
        reaches for a unit only to fill a rank gap.  Unconditionally yields
        an invertible basis, at dense-QR cost, so this is the last resort.
        """
        if m == 0 or m > 4000:
            return False
        avail = np.flatnonzero(unit_col >= 0)
        ucols = unit_col[avail]
        aug = np.hstack(
            [Afull[:, basis].toarray(), Afull[:, ucols].toarray() * 1e-6]
        )
        _, rfac, pcol = scipy.linalg.qr(
            aug, mode="economic", pivoting=True, check_finite=False
        )
        rdiag = np.abs(np.diag(rfac))
        if rdiag.size < m or rdiag[m - 1] <= 0.0:
            return False
        chosen = pcol[:m]
        new_cols = np.where(chosen < m, basis[np.minimum(chosen, m - 1)],
                            ucols[np.maximum(chosen - m, 0)])
        new_set = set(new_cols.tolist())
        if len(new_set) != m:
            return False
        if _DEBUG:
            print(f"[rebuild] kept={sum(1 for i in chosen if i < m)} of {m}")
        for col in set(basis.tolist()) - new_set:
            _make_nonbasic(int(col))
        basis[:] = new_cols
        for col in new_cols:
            vstat[col] = BASIC
        return True

    # columns whose pivot column came back numerically dead; excluded from
    # pricing until the next refactorization gives them another chance
    banned = np.zeros(ncols, dtype=bool)
    # flag for run_phase to rebuild reduced costs and devex weights from scratch
    need_reprice = [True]

    REPAIR_TOLS = (1e-11, 1e-8, 1e-6, 1e-4)

    def refactor_and_recompute():
        banned[:] = False
        need_reprice[0] = True
        n_quick = len(REPAIR_TOLS)
        for attempt in range(n_quick + 2):
            fix = None
            if attempt < n_quick:
                fix = lambda forced: repair_basis(REPAIR_TOLS[attempt], force=forced)
            elif attempt == n_quick:
                fix = lambda forced: rebuild_basis()
            try:
                basis_obj.refactor(basis)
            except RuntimeError:
                if _DEBUG:
                    print(f"[refactor] attempt={attempt} splu raised iters={iters[0]}")
                if fix is None or not fix(True):
                    raise
                continue
            probe = basis_obj.residual_probe() if m else 0.0
            if not math.isfinite(probe):
                probe = INF
            if _DEBUG and probe > 1e-12:
                print(f"[refactor] attempt={attempt} probe={probe:.3e} iters={iters[0]}")
            if m and probe > 1e-9 and fix is not None:
                if fix(probe == INF):
                    continue
            if probe == INF:
                raise RuntimeError("basis repair did not converge")
            recompute_basics()
            return
        raise RuntimeError("basis repair did not converge")

    def run_phase(c_vec: np.ndarray, phase: int):
        dtol = opts.opt_tol * max(1.0, float(np.abs(c_vec).max(initial=0.0)))
        # anti-cycling: fall back to Bland's rule after a long stretch without
        # objective progress, return to devex once progress resumes
        z_best = INF
        stall = 0
        stall_cap = max(1000, 2 * m)
        bland = False
        final_pass = False
        p1_tol = opts.feas_tol * max(1.0, float(np.abs(b).max(initial=0.0)))
        # degenerate-vertex escape: under a long stall, basic structural and
        # slack columns get their bounds relaxed by a tiny random amount, so
        # ratio tests yield strictly positive steps; true bounds come back as
        # soon as the objective moves again
        jig_saved = [None]

        def jiggle_bounds():
            if jig_saved[0] is None:
                jig_saved[0] = (lo.copy(), hi.copy())
            rngj = np.random.default_rng(977 + iters[0])
            bas = basis[basis < n_struct + n_slacks]
            if bas.size == 0:
                return
            # debt-free by construction: terminal restore snaps strays home
            # and dual pivots pull violated basics back inside
            amp = 1e-8 * (1.0 + np.abs(x[bas])) * rngj.uniform(0.5, 1.5, bas.size)
            lob = lo[bas]
            hib = hi[bas]
            lo[bas] = np.where(lob > -INF, lob - amp, lob)
            hi[bas] = np.where(hib < INF, hib + amp, hib)

        def restore_bounds():
            if jig_saved[0] is not None:
                lo[:], hi[:] = jig_saved[0]
                jig_saved[0] = None
                # pivots taken while relaxed parked nonbasics on the nudged
                # bounds; snap them home and refresh the basics they fed
                atlo = (vstat == AT_LO) | (vstat == FIXED_NB)
                x[atlo] = lo[atlo]
                athi = vstat == AT_HI
                x[athi] = hi[athi]
                recompute_basics()
        # reduced costs kept incrementally between refactorizations; devex
        # weights approximate steepest-edge column norms
        d = np.zeros(ncols)
        gamma = np.ones(ncols)

        def dual_values() -> np.ndarray:
            """Row duals for the current basis, refined once when the
            factorization is fresh so ill-conditioning eats fewer digits."""
            if m == 0:
                return np.zeros(0)
            cB = c_vec[basis]
            y = basis_obj.btran(cB)
            if basis_obj.n_etas == 0:
                resid = cB - basis_obj.B.T @ y
                y = y + basis_obj.btran(resid)
            return y

        def reprice():
            y = dual_values()
            d[:] = c_vec - (AfullT @ y if m else 0.0)
            gamma[:] = 1.0
            need_reprice[0] = False

        need_reprice[0] = True
        while True:
            if iters[0] >= opts.max_iters:
                restore_bounds()
                return "IterationLimit"
            if need_reprice[0]:
                reprice()
            z = float(c_vec @ x)
            if phase == 1 and z <= p1_tol:
                # artificial mass is gone: feasible, stop pivoting at once,
                # but only judged against the true bounds
                if jig_saved[0] is not None:
                    restore_bounds()
                    continue
                return "Optimal"
            if z < z_best - 1e-12 * (1.0 + abs(z_best)):
                z_best = z
                stall = 0
                bland = False
            else:
                stall += 1
                if stall % 500 == 0 and not bland:
                    jiggle_bounds()
                if stall > stall_cap:
                    bland = True
            if _DEBUG and iters[0] % 2000 == 0:
                print(f"[trace] it={iters[0]} phase={phase} z={z:.10e} "
                      f"stall={stall} bland={bland}")
            eligible = (
                ((vstat == AT_LO) & (d < -dtol))
                | ((vstat == AT_HI) & (d > dtol))
                | ((vstat == FREE_NB) & (np.abs(d) > dtol))
            ) & ~banned
            if has_partner.size:
                eligible[has_partner[vstat[partner[has_partner]] == BASIC]] = False
            idx = np.flatnonzero(eligible)
            if idx.size == 0:
                if jig_saved[0] is not None:
                    # never terminate against relaxed bounds: restore them,
                    # pull any stray basics back inside by dual pivoting,
                    # then re-examine
                    restore_bounds()
                    dual_cleanup(c_vec)
                    continue
                if basis_obj.n_etas and not final_pass:
                    # reprice once from a fresh factorization before declaring done
                    refactor_and_recompute()
                    final_pass = True
                    continue
                return "Optimal"
            final_pass = False
            if bland:
                q = int(idx[0])
            else:
                dq2 = d[idx]
                q = int(idx[np.argmax(dq2 * dq2 / gamma[idx])])
            sigma = 1.0 if (vstat[q] == AT_LO or (vstat[q] == FREE_NB and d[q] < 0)) else -1.0

            rhs = np.zeros(m)
            a0, a1 = Afull.indptr[q], Afull.indptr[q + 1]
            rhs[Afull.indices[a0:a1]] = Afull.data[a0:a1]
            w = basis_obj.ftran(rhs) if m else rhs
            sw = sigma * w
            xB = x[basis]
            loB = lo[basis]
            hiB = hi[basis]
            # two-pass (Harris) ratio test: the relaxed pass allows each basic
            # a delta of bound slack and caps the step; the exact pass then
            # supplies the candidates, from which the largest pivot element
            # wins, keeping factorizations away from singularity
            delta = 1e-9 * (1.0 + np.abs(xB))
            with np.errstate(divide="ignore", invalid="ignore"):
                theta_dec = np.where(sw > PIVOT_TOL, (xB - loB) / sw, INF)
                theta_inc = np.where(sw < -PIVOT_TOL, (xB - hiB) / sw, INF)
                relax_dec = np.where(sw > PIVOT_TOL, (xB - loB + delta) / sw, INF)
                relax_inc = np.where(sw < -PIVOT_TOL, (xB - hiB - delta) / sw, INF)
            theta_rows = np.minimum(theta_dec, theta_inc)
            np.maximum(theta_rows, 0.0, out=theta_rows)
            theta_relax = np.minimum(relax_dec, relax_inc)
            theta_self = hi[q] - lo[q]
            theta_row_min = float(theta_rows.min()) if m else INF
            theta_max = float(theta_relax.min()) if m else INF
            theta_min = min(theta_row_min, theta_self)

            if theta_min == INF:
                # no blocking row: genuine unboundedness, or a numerically dead
                # pivot column; judge only against true bounds and a fresh
                # factorization
                if jig_saved[0] is not None:
                    restore_bounds()
                    continue
                if basis_obj.n_etas:
                    refactor_and_recompute()
                    continue
                # re-derive this one reduced cost from refined duals; a vertex
                # with a large condition number can fake a favorable d through
                # roundoff alone, and that must not become an Unbounded verdict
                y_ref = dual_values()
                a0, a1 = Afull.indptr[q], Afull.indptr[q + 1]
                dq_ref = float(c_vec[q]) - float(
                    Afull.data[a0:a1] @ y_ref[Afull.indices[a0:a1]])
                favorable = (
                    (vstat[q] == AT_LO and dq_ref < -dtol)
                    or (vstat[q] == AT_HI and dq_ref > dtol)
                    or (vstat[q] == FREE_NB and abs(dq_ref) > dtol)
                )
                if favorable and sigma * dq_ref >= 0.0:
                    # the incremental reduced cost carried the wrong sign, so
                    # the ratio test ran the wrong way; fix it and retry
                    d[q] = dq_ref
                    continue
                w_big = float(np.abs(w).max()) if m else 0.0
                if phase == 2 and favorable and (w_big > PIVOT_TOL or w_big == 0.0):
                    ray = np.zeros(ncols)
                    ray[q] = sigma
                    if m:
                        ray[basis] -= sigma * w
                    # a genuine ray respects every finite bound directionally;
                    # a solve poisoned by conditioning must not fake one
                    tolr = 1e-6 * (1.0 + float(np.abs(ray).max()))
                    bad = ((lo > -INF) & (ray < -tolr)) | ((hi < INF) & (ray > tolr))
                    if not bad.any():
                        if _DEBUG:
                            print(f"[unbdd] q={q} vq={vstat[q]} sigma={sigma} "
                                  f"dq={d[q]:.6e} dq_ref={dq_ref:.6e} "
                                  f"cray={float(c_vec @ ray):.6e} "
                                  f"lo={lo[q]:.3e} hi={hi[q]:.3e} "
                                  f"wbig={w_big:.3e} iters={iters[0]}")
                        return ("Unbounded", ray[:n_struct].copy())
                banned[q] = True
                continue

            iters[0] += 1
            if theta_self <= theta_row_min:
                # flip to the opposite bound, basis unchanged
                theta = theta_self
                x[q] = hi[q] if sigma > 0 else lo[q]
                vstat[q] = AT_HI if sigma > 0 else AT_LO
                if m:
                    x[basis] = xB - sigma * theta * w
                continue

            if bland:
                # anti-cycling requires the lowest-index row unconditionally,
                # chosen from the exact minimum-ratio tie set
                tie = theta_row_min + 1e-9 * (1.0 + abs(theta_row_min))
                cand = np.flatnonzero(theta_rows <= tie)
                p = int(cand[np.argmin(basis[cand])])
            else:
                # second Harris pass: every row whose exact ratio fits under
                # the relaxed cap is admissible; take the largest pivot element
                cand = np.flatnonzero(theta_rows <= theta_max)
                if cand.size == 0:
                    cand = np.flatnonzero(theta_rows <= theta_row_min)
                # among admissible rows, skip unit columns whose exit would
                # uncover a twin-row direction, unless nothing else remains
                p = int(cand[np.argmax(np.abs(w[cand]))])
                if not _twin_covered(int(basis[p]), q):
                    for pc in cand[np.argsort(-np.abs(w[cand]))]:
                        if _twin_covered(int(basis[pc]), q):
                            p = int(pc)
                            break
            theta = float(theta_rows[p])
            leaving = int(basis[p])
            if m:
                x[basis] = xB - sigma * theta * w
            x[q] = x[q] + sigma * theta
            # snap the leaving variable onto the bound it hit
            if sigma * w[p] > 0:
                x[leaving] = lo[leaving]
                vstat[leaving] = FIXED_NB if lo[leaving] == hi[leaving] else AT_LO
            else:
                x[leaving] = hi[leaving]
                vstat[leaving] = FIXED_NB if lo[leaving] == hi[leaving] else AT_HI

            # pivot row (in column space) drives both the reduced-cost update
            # and the devex weight propagation
            e_p = np.zeros(m)
            e_p[p] = 1.0
            alpha = AfullT @ basis_obj.btran(e_p)
            piv = float(w[p])
            ratio_d = float(d[q]) / piv
            gq = float(gamma[q])
            d -= ratio_d * alpha
            d[q] = 0.0
            d[leaving] = -ratio_d
            np.maximum(gamma, (alpha / piv) ** 2 * gq, out=gamma)
            gamma[leaving] = max(gq / (piv * piv), 1.0)
            gamma[q] = 1.0
            if float(gamma.max()) > 1e10:
                gamma[:] = 1.0

            basis[p] = q
            vstat[q] = BASIC
            basis_obj.push_eta(p, w)
            if basis_obj.n_etas >= REFACTOR_EVERY:
                refactor_and_recompute()

    def dual_cleanup(c_vec: np.ndarray) -> bool:
        """Dual-simplex pass for the rhs tightening step.

        Tightening the rhs leaves the reduced costs optimal but may push
        basics out of their bounds, which primal pivoting cannot see; the
        classic remedy is dual pivoting from the warm basis.  Each round
        kicks the worst violator out at the bound it broke and brings in the
        column winning the dual ratio test, so dual feasibility is kept
        while primal feasibility is restored.  Returns False when a
        violated row has no admissible pivot, which leaves the final primal
        pass to render the verdict.
        """
        if m == 0:
            return True
        vt = opts.feas_tol * max(1.0, float(np.abs(b).max(initial=0.0)))

        def fresh_d() -> np.ndarray:
            cB = c_vec[basis]
            y = basis_obj.btran(cB)
            y = y + basis_obj.btran(cB - basis_obj.B.T @ y)
            return c_vec - AfullT @ y

        d = fresh_d()
        for _ in range(20000):
            xB = x[basis]
            v_lo = lo[basis] - xB
            v_hi = xB - hi[basis]
            viol = np.maximum(v_lo, v_hi)
            r = int(np.argmax(viol))
            if viol[r] <= vt:
                need_reprice[0] = True
                return True
            below = v_lo[r] >= v_hi[r]
            e_r = np.zeros(m)
            e_r[r] = 1.0
            rho = basis_obj.btran(e_r)
            alpha = AfullT @ rho
            # normalize so the admissible dual step is nonnegative
            a = -alpha if below else alpha
            cand = (
                ((vstat == AT_LO) & (a > PIVOT_TOL))
                | ((vstat == AT_HI) & (a < -PIVOT_TOL))
                | ((vstat == FREE_NB) & (np.abs(a) > PIVOT_TOL))
            ) & ~banned
            if has_partner.size:
                cand[has_partner[vstat[partner[has_partner]] == BASIC]] = False
            cj = np.flatnonzero(cand)
            if cj.size == 0:
                need_reprice[0] = True
                return False
            ratios = d[cj] / a[cj]
            gmin = float(ratios.min())
            band = np.flatnonzero(ratios <= gmin + 1e-10 * (1.0 + abs(gmin)))
            q = int(cj[band[np.argmax(np.abs(a[cj[band]]))]])

            leave_col = int(basis[r])
            bound_r = lo[leave_col] if below else hi[leave_col]
            rhs_col = np.zeros(m)
            a0, a1 = Afull.indptr[q], Afull.indptr[q + 1]
            rhs_col[Afull.indices[a0:a1]] = Afull.data[a0:a1]
            w_q = basis_obj.ftran(rhs_col)
            sigma = 1.0 if a[q] > 0 else -1.0
            t = abs((x[leave_col] - bound_r) / alpha[q])
            x[basis] = xB - sigma * t * w_q
            x[q] = x[q] + sigma * t
            x[leave_col] = bound_r
            if lo[leave_col] == hi[leave_col]:
                vstat[leave_col] = FIXED_NB
            else:
                vstat[leave_col] = AT_LO if below else AT_HI
            gam = float(d[q]) / float(alpha[q])
            d -= gam * alpha
            d[q] = 0.0
            d[leave_col] = -gam
            basis[r] = q
            vstat[q] = BASIC
            basis_obj.push_eta(r, w_q)
            if basis_obj.n_etas >= REFACTOR_EVERY:
                refactor_and_recompute()
                d = fresh_d()
        need_reprice[0] = True
        return False

    # ---- phase 1
    if n_art:
        out = run_phase(c_phase1, phase=1)
        if out == "IterationLimit":
            return LPSolution(status="IterationLimit", iterations=iters[0])
        art_slice = slice(n_struct + n_slacks, ncols)
        infeas = float(x[art_slice].sum())
        if infeas > opts.feas_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPSolution(status="Infeasible", iterations=iters[0])
        # pin artificials at zero for phase 2; basic ones stay at their
        # (within-tolerance) residual values and leave the basis on their own
        hi[art_slice] = 0.0
        nb_art = (vstat[art_slice] != BASIC)
        vstat_view = vstat[art_slice]
        vstat_view[nb_art] = FIXED_NB
        x_view = x[art_slice]
        x_view[nb_art] = 0.0

    # ---- phase 2
    out = run_phase(c_phase2, phase=2)
    if out == "Optimal" and relax_scale[0] > 0.0:
        # drop the rhs relaxation, restore primal feasibility by dual
        # pivoting from the warm basis, then let a final primal pass confirm
        relax_scale[0] = 0.0
        b[:] = b_true
        if m:
            refactor_and_recompute()
            ok = dual_cleanup(c_phase2)
            if _DEBUG:
                print(f"[tighten] cleanup={'ok' if ok else 'bailed'} "
                      f"iters={iters[0]}")
            refactor_and_recompute()
        out = run_phase(c_phase2, phase=2)
    if out == "IterationLimit":
        return LPSolution(status="IterationLimit", iterations=iters[0])
    if isinstance(out, tuple) and out[0] == "Unbounded":
        return LPSolution(status="Unbounded", iterations=iters[0], ray=out[1])

    if m:
        refactor_and_recompute()
        cB = c_phase2[basis]
        y = basis_obj.btran(cB)
        y = y + basis_obj.btran(cB - basis_obj.B.T @ y)
    else:
        y = np.zeros(0)
    d = c_phase2 - (AfullT @ y if m else 0.0)
    obj_internal = float(c_phase2 @ x)
    return LPSolution(
        status="Optimal",
        primal=x[:n_struct].copy(),
        row_duals=y.copy(),
        objective=sign * obj_internal,
        is_vertex=True,
        iterations=iters[0],
        reduced_costs=d[:n_struct].copy(),
    )
