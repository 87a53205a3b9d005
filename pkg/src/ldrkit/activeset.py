"""Active-set solver: grow a small set of rule coefficients until optimal.

The loop solves the compact dual restricted to the current active set, reads
the rule coefficients off the equality-row duals, and evaluates a residual for
every inactive triple. Zero residuals certify optimality of the extracted rule
for the unrestricted problem; otherwise one randomly chosen period per
decision is activated, and triples whose record value exceeds the current
objective while their coefficient vanished are dropped again.

An unbounded restricted dual (the restricted primal is infeasible) is re-run
with the multipliers capped at M, escalating M tenfold until the cap is slack.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lp import LPModel, LPSolution, SolverOptions, solve
from .model import LinearDecisionRule, ROInstance, nonnegativity_rows_present
from .reformulate import ActiveSet, TupleIndex, build_D_A, dedup_tuples

OBJ_DECREASE_TOL = 1e-9


@dataclass
class ActiveSetOptions:
    """Knobs for solve_active_set; defaults follow the package conventions."""

    seed: int = 0
    eps_term: float = 1e-7
    zero_tol: float = 1e-9
    max_iterations: int = 500
    M0: float = 1e6
    M_cap: float = 1e12
    backend: str = "bundled"
    solver_options: SolverOptions | None = None
    reference_objective: float | None = None
    target_gap: float | None = None
    validate: bool = True


@dataclass
class ActiveSetState:
    """Mutable loop state: the set itself plus the growth bookkeeping.

    v records the objective at which a triple was added; only triples added
    after initialization carry a record, which is what shields the initial
    triples from pruning.
    """

    active: ActiveSet
    v: dict = field(default_factory=dict)
    rng_seed: int = 0
    iteration: int = 0


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    active_size: int
    K_A: int
    objective: float
    max_residual: float
    added: int
    removed: int
    millis: float


@dataclass
class IterationStats:
    """Per-iteration trace plus the final outcome of one solver run."""

    records: list
    objective: float
    converged: bool
    stopped_on: str            # residuals | gap | iteration-cap
    seed: int
    gap: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        lines = ["iteration,active_size,K_A,objective,max_residual,added,removed,millis"]
        for r in self.records:
            lines.append(f"{r.iteration},{r.active_size},{r.K_A},{r.objective!r},"
                         f"{r.max_residual!r},{r.added},{r.removed},{r.millis:.3f}")
        return "\n".join(lines) + "\n"


def markovian_init(horizon: int, n: int) -> ActiveSet:
    """Rules x_t = y[t,1] + y[t,t] zeta_t: first and own period of every stage."""
    if horizon < 1 or n < 1:
        raise ValueError("horizon and n must be positive")
    triples = {(t, 1, j) for t in range(1, horizon + 1) for j in range(1, n + 1)}
    triples |= {(t, t, j) for t in range(1, horizon + 1) for j in range(1, n + 1)}
    return ActiveSet(horizon, n, triples)


def extract_ldr(solution: LPSolution, model: LPModel, active: ActiveSet) -> LinearDecisionRule:
    """Rule coefficients from the equality-row duals of the restricted dual.

    y[t,s,j] is the dual of row eq[t,s,j]; the epigraph value c0 equals the
    model objective (the restricted primal optimum, by strong duality).
    """
    if solution.status != "Optimal":
        raise ValueError(f"cannot extract a rule from a {solution.status} solution")
    entries = {}
    for (t, s, j) in active:
        entries[(t, s, j)] = solution.dual_of(model, f"eq[{t},{s},{j}]")
    return LinearDecisionRule(entries, c0=float(solution.objective))


def _lam_zeta(instance: ROInstance, idx: TupleIndex, model: LPModel,
              solution: LPSolution):
    """Multiplier vector and per-period group values out of a dual solution.

    The builder lays columns out as lam[0..m] then the zeta blocks period by
    period, which the names confirm; pinned zero-group columns read as 0.
    """
    m = instance.m
    if model.col_names[0] != "lam[0]" or model.col_names[m] != f"lam[{m}]":
        raise ValueError("model columns are not in restricted-dual layout")
    lam = np.asarray(solution.primal[:m + 1])
    zetas = []
    pos = m + 1
    for s in range(1, instance.horizon + 1):
        ks = idx.counts[s - 1]
        if ks and model.col_names[pos] != f"zeta[{s},0]":
            raise ValueError("model columns are not in restricted-dual layout")
        zetas.append(np.asarray(solution.primal[pos:pos + ks]))
        pos += ks
    return lam, zetas


def termination_residuals(instance: ROInstance, active: ActiveSet, idx: TupleIndex,
                          model: LPModel, solution: LPSolution) -> dict:
    """Residual r[t,s,j] for every inactive triple; all-zero means optimal.

    r[t,s,j] = sum_k alpha[s,k] * sum_{i in group k} lam[i] a[i,t,j] with
    alpha[s,k] = zeta[s,k] / (group multiplier sum) and 0/0 taken as 0.
    Evaluated period by period: one weight vector over rows, one product with
    the coefficient matrix, so no (t,s,j) tensor is ever held.
    """
    lam, zetas = _lam_zeta(instance, idx, model, solution)
    H, n = instance.horizon, instance.n
    out = {}
    for s in range(1, H + 1):
        pi = idx.groups_of(s)
        sums = np.bincount(pi, weights=lam, minlength=idx.counts[s - 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(sums != 0.0, zetas[s - 1] / sums, 0.0)
        weight = lam * alpha[pi]
        r_s = instance.a.T @ weight          # length H*n, indexed by (t, j)
        for t in range(s, H + 1):
            base = (t - 1) * n
            for j in range(1, n + 1):
                if (t, s, j) not in active:
                    out[(t, s, j)] = float(r_s[base + j - 1])
    return out


def termination_residuals_reference(instance: ROInstance, active: ActiveSet,
                                    idx: TupleIndex, model: LPModel,
                                    solution: LPSolution) -> dict:
    """Same residuals by direct per-triple summation; cross-check oracle.

    Deliberately written as the plain triple loop over rows so it shares no
    evaluation order with termination_residuals.
    """
    lam, zetas = _lam_zeta(instance, idx, model, solution)
    H, n, m = instance.horizon, instance.n, instance.m
    out = {}
    for s in range(1, H + 1):
        pi = idx.groups_of(s)
        group_sum = np.bincount(pi, weights=lam, minlength=idx.counts[s - 1])
        for t in range(s, H + 1):
            for j in range(1, n + 1):
                if (t, s, j) in active:
                    continue
                col = instance.col_of(t, j)
                total = 0.0
                for i in range(m + 1):
                    a_itj = instance.a[i, col]
                    if a_itj == 0.0 or lam[i] == 0.0:
                        continue
                    denom = group_sum[pi[i]]
                    if denom == 0.0:
                        continue
                    total += a_itj * (lam[i] / denom) * zetas[s - 1][pi[i]]
                out[(t, s, j)] = total
    return out


def partition_candidates(residuals: dict, eps_term: float):
    """Split inactive triples into growth candidates and the settled rest."""
    if eps_term <= 0:
        raise ValueError("eps_term must be positive")
    scale = max((abs(v) for v in residuals.values()), default=0.0)
    cut = eps_term * (1.0 + scale)
    a_neq = {trip for trip, v in residuals.items() if abs(v) > cut}
    a_eq = set(residuals) - a_neq
    return a_neq, a_eq


def grow_active_set(state: ActiveSetState, a_neq: set, rng: np.random.Generator,
                    current_obj: float) -> frozenset:
    """Activate one uniformly drawn candidate period per (stage, decision).

    Every added triple gets a record of the objective it was added at, the
    hurdle later pruning measures against.
    """
    if not a_neq:
        raise ValueError("empty-candidate-set")
    by_tj = {}
    for (t, s, j) in a_neq:
        by_tj.setdefault((t, j), []).append(s)
    added = set()
    for (t, j) in sorted(by_tj):
        periods = sorted(by_tj[(t, j)])
        s = periods[int(rng.integers(len(periods)))]
        added.add((t, s, j))
    state.active = state.active.union(added)
    for trip in added:
        state.v[trip] = float(current_obj)
    return frozenset(added)


def prune_active_set(state: ActiveSetState, current_obj: float,
                     ldr: LinearDecisionRule, zero_tol: float = 1e-9) -> frozenset:
    """Drop recorded triples whose hurdle is beaten while their y vanished.

    A triple leaves only when the objective has strictly improved past its
    record and its coefficient in the current rule is (numerically) zero;
    initialization triples carry no record and are never dropped.
    """
    cut = zero_tol * max(1.0, ldr.max_abs())
    removed = set()
    for trip, hurdle in state.v.items():
        if trip not in state.active:
            continue
        if current_obj < hurdle - OBJ_DECREASE_TOL and abs(ldr.entries.get(trip, 0.0)) <= cut:
            removed.add(trip)
    if removed:
        state.active = state.active.difference(removed)
        for trip in removed:
            del state.v[trip]
    return frozenset(removed)


def _solve_restricted_dual(instance: ROInstance, active: ActiveSet, idx: TupleIndex,
                           opts: ActiveSetOptions):
    """One dual solve, falling back to capped multipliers when unbounded."""
    sopts = opts.solver_options or SolverOptions()
    model = build_D_A(instance, active, idx)
    sol = solve(model, sopts, backend=opts.backend)
    if sol.status == "Optimal":
        return model, sol
    if sol.status != "Unbounded":
        raise RuntimeError(f"restricted dual solve failed with status {sol.status}")
    M = opts.M0
    while True:
        model = build_D_A(instance, active, idx, M=M)
        sol = solve(model, sopts, backend=opts.backend)
        if sol.status != "Optimal":
            raise RuntimeError(
                f"capped restricted dual (M={M:g}) failed with status {sol.status}")
        lam_max = float(np.abs(sol.primal[1:instance.m + 1]).max(initial=0.0))
        if lam_max < M * (1.0 - 1e-9):
            return model, sol
        M *= 10.0
        if M > opts.M_cap:
            raise RuntimeError(
                f"multiplier cap escalation exceeded {opts.M_cap:g} without "
                "freeing the bound: the restricted primal appears infeasible "
                "at every cap, so the instance admits no feasible rule on "
                "this active set (a robustly infeasible instance shows this "
                "on every active set)")


def solve_active_set(instance: ROInstance, opts: ActiveSetOptions | None = None):
    """Run the growth loop to optimality, a target gap, or the iteration cap.

    Returns (rule, stats). The rule of a capped run is the best one seen
    (objectives never increase along the loop), flagged via stats.converged.
    """
    opts = opts or ActiveSetOptions()
    if opts.validate and not nonnegativity_rows_present(instance):
        raise ValueError(
            "instance rows do not force every decision nonnegative; "
            "the growth loop requires that structure")
    H, n = instance.horizon, instance.n
    state = ActiveSetState(active=markovian_init(H, n), rng_seed=opts.seed)
    rng = np.random.default_rng(opts.seed)
    records = []
    ldr = None
    stopped_on = "iteration-cap"

    while state.iteration < opts.max_iterations:
        state.iteration += 1
        t0 = time.perf_counter()
        idx = dedup_tuples(instance, state.active)
        size_now, k_now = len(state.active), idx.total
        model, sol = _solve_restricted_dual(instance, state.active, idx, opts)
        obj = float(sol.objective)
        ldr = extract_ldr(sol, model, state.active)
        residuals = termination_residuals(instance, state.active, idx, model, sol)
        max_resid = max((abs(v) for v in residuals.values()), default=0.0)
        a_neq, _ = partition_candidates(residuals, opts.eps_term)

        n_added = n_removed = 0
        done = False
        if not a_neq:
            stopped_on, done = "residuals", True
        elif opts.reference_objective is not None and opts.target_gap is not None:
            gap = (obj - opts.reference_objective) / max(1.0, abs(opts.reference_objective))
            if gap <= opts.target_gap:
                stopped_on, done = "gap", True
        if not done:
            added = grow_active_set(state, a_neq, rng, obj)
            removed = prune_active_set(state, obj, ldr, zero_tol=opts.zero_tol)
            n_added, n_removed = len(added), len(removed)
        millis = (time.perf_counter() - t0) * 1000.0
        records.append(IterationRecord(state.iteration, size_now, k_now, obj,
                                       float(max_resid), n_added, n_removed, millis))
        if done:
            break

    objective = float(records[-1].objective)
    gap = None
    if opts.reference_objective is not None:
        gap = (objective - opts.reference_objective) / max(1.0, abs(opts.reference_objective))
    stats = IterationStats(records=records, objective=objective,
                           converged=stopped_on != "iteration-cap",
                           stopped_on=stopped_on, seed=opts.seed, gap=gap)
    return ldr, stats
