"""Instance generators: production-inventory (with optional lead times) and
the dynamic newsvendor, plus the sinusoidal benchmark parameterization.

Both generators append a dummy final stage so that every stage carries the
same number of decisions; the dummy decisions are pinned to zero by their
bound rows. Generated instances have H = T + 1 stages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import BoxUncertainty, ROInstance


@dataclass(frozen=True)
class ProductionInventorySpec:
    """Data for a warehouse fed by E factories over T periods.

    c[t][e] production cost, p[t][e] per-period capacity, Q[e] total capacity,
    warehouse band [Vmin, Vmax] with initial inventory v1, demand interval
    [demand_lo[t], demand_hi[t]] for the uncertainty revealed at stage t+1,
    and optional per-factory lead times delta[e] (0 = same-stage arrival).
    """

    T: int
    E: int
    c: np.ndarray           # (T, E)
    p: np.ndarray           # (T, E)
    Q: np.ndarray           # (E,)
    Vmin: float
    Vmax: float
    v1: float
    demand_lo: np.ndarray   # (T,), demand revealed at stages 2..T+1
    demand_hi: np.ndarray   # (T,)
    delta: tuple = ()       # per-factory lead times, empty = all zero

    def __post_init__(self):
        T, E = int(self.T), int(self.E)
        if T < 1 or E < 1:
            raise ValueError("T and E must be positive")
        for name in ("c", "p", "Q", "demand_lo", "demand_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.c.shape != (T, E) or self.p.shape != (T, E):
            raise ValueError(f"c and p must have shape {(T, E)}")
        if self.Q.shape != (E,):
            raise ValueError(f"Q must have shape {(E,)}")
        if self.demand_lo.shape != (T,) or self.demand_hi.shape != (T,):
            raise ValueError(f"demand bounds must have shape {(T,)}")
        if np.any(self.p < 0) or np.any(self.Q < 0):
            raise ValueError("capacities must be nonnegative")
        if not (self.Vmin <= self.v1 <= self.Vmax):
            raise ValueError("need Vmin <= v1 <= Vmax")
        delta = tuple(int(d) for d in self.delta)
        object.__setattr__(self, "delta", delta)
        if delta and len(delta) != E:
            raise ValueError("delta must give one lead time per factory")
        if any(not (0 <= d <= T) for d in delta):
            raise ValueError("lead times must lie in [0, T]")

    def lead_times(self) -> tuple:
        return self.delta if self.delta else (0,) * self.E


@dataclass(frozen=True)
class NewsvendorSpec:
    """Single-product ordering with holding cost h[t] and backorder cost b[t]."""

    T: int
    c: np.ndarray           # (T,) per-period order cost
    h: np.ndarray           # (T,)
    b: np.ndarray           # (T,)
    p: np.ndarray           # (T,) order capacity
    v1: float
    demand_lo: np.ndarray   # (T,)
    demand_hi: np.ndarray   # (T,)

    def __post_init__(self):
        T = int(self.T)
        if T < 1:
            raise ValueError("T must be positive")
        for name in ("c", "h", "b", "p", "demand_lo", "demand_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if arr.shape != (T,):
                raise ValueError(f"{name} must have shape {(T,)}")
        if np.any(self.h < 0) or np.any(self.b < 0):
            raise ValueError("holding and backorder costs must be nonnegative")
        if np.any(self.p < 0):
            raise ValueError("capacities must be nonnegative")


def _box(T: int, demand_lo: np.ndarray, demand_hi: np.ndarray) -> BoxUncertainty:
    lo = np.concatenate(([1.0], demand_lo))
    hi = np.concatenate(([1.0], demand_hi))
    return BoxUncertainty(lo, hi)


class _RowAccum:
    """Collects sparse rows in emission order."""

    def __init__(self, H: int, n: int):
        self.H, self.n = H, n
        self.ar, self.ac, self.av = [], [], []
        self.br, self.bc, self.bv = [], [], []
        self.c = []
        self.labels = ["objective"]
        self.row = 0

    def set_a(self, t: int, j: int, val: float):
        self.ar.append(self.row)
        self.ac.append((t - 1) * self.n + (j - 1))
        self.av.append(float(val))

    def set_b(self, s: int, val: float):
        self.br.append(self.row)
        self.bc.append(s - 1)
        self.bv.append(float(val))

    def finish_objective(self):
        # row 0 carries no rhs and is pre-labeled
        assert self.row == 0
        self.row = 1

    def next_row(self, label: str, rhs: float):
        self.labels.append(label)
        self.c.append(float(rhs))
        self.row += 1

    def build(self, box: BoxUncertainty, meta: dict) -> ROInstance:
        m = len(self.c)
        a = sp.csr_matrix((self.av, (self.ar, self.ac)), shape=(m + 1, self.H * self.n))
        b = sp.csr_matrix((self.bv, (self.br, self.bc)), shape=(m + 1, self.H))
        return ROInstance(horizon=self.H, n=self.n, a=a, b=b, c=np.array(self.c),
                          box=box, labels=tuple(self.labels), meta=meta)


def gen_production_inventory(spec: ProductionInventorySpec) -> ROInstance:
    """Emit the warehouse problem in row form.

    Row order: objective; capacity per factory; bound-ub/bound-lb per (t, e)
    including the dummy stage (its capacity is zero, pinning the dummy
    decisions); inventory-ub/inventory-lb per period t. Capacity rows sum
    over every stage including the dummy one. With lead times set, only the
    inventory rows change: factory e's stage-l production enters the period-t
    inventory iff l <= t - delta[e].
    """
    T, E = spec.T, spec.E
    H, n = T + 1, E
    delta = spec.lead_times()
    acc = _RowAccum(H, n)

    # objective: sum_t sum_e c[t][e] x[t][e]; dummy stage costs nothing
    for t in range(1, T + 1):
        for e in range(1, E + 1):
            if spec.c[t - 1, e - 1] != 0.0:
                acc.set_a(t, e, spec.c[t - 1, e - 1])
    acc.finish_objective()

    for e in range(1, E + 1):
        for t in range(1, H + 1):
            acc.set_a(t, e, 1.0)
        acc.next_row("capacity", spec.Q[e - 1])

    for t in range(1, H + 1):
        for e in range(1, E + 1):
            p_te = spec.p[t - 1, e - 1] if t <= T else 0.0
            acc.set_a(t, e, 1.0)
            acc.next_row("bound-ub", p_te)
            acc.set_a(t, e, -1.0)
            acc.next_row("bound-lb", 0.0)

    for t in range(1, T + 1):
        # v1 + sum_e sum_{l <= t - delta[e]} x[l][e] - sum_{s=2}^{t+1} zeta_s in [Vmin, Vmax]
        for e in range(1, E + 1):
            for l in range(1, t - delta[e - 1] + 1):
                acc.set_a(l, e, 1.0)
        for s in range(2, t + 2):
            acc.set_b(s, 1.0)
        acc.next_row("inventory-ub", spec.Vmax - spec.v1)
        for e in range(1, E + 1):
            for l in range(1, t - delta[e - 1] + 1):
                acc.set_a(l, e, -1.0)
        for s in range(2, t + 2):
            acc.set_b(s, -1.0)
        acc.next_row("inventory-lb", spec.v1 - spec.Vmin)

    name = "prodinv-leadtime" if spec.delta else "prodinv"
    meta = {
        "generator": name,
        "T": T,
        "E": E,
        "params": {
            "v1": spec.v1, "Vmin": spec.Vmin, "Vmax": spec.Vmax,
            "Q": [float(q) for q in spec.Q],
            "delta": list(delta) if spec.delta else [],
        },
    }
    return acc.build(_box(T, spec.demand_lo, spec.demand_hi), meta)


def benchmark_params(T: int, E: int, theta: float = 0.2) -> ProductionInventorySpec:
    """Sinusoidal seasonal benchmark.

    phi_t = 1 + 0.5 sin(2 pi (t-2) / T); demand at stage t in {2..T+1} ranges
    over [1000 (1-theta) phi_t / (T/24), 1000 (1+theta) phi_t / (T/24)];
    c[t][e] = (1 + (e-1)/(E-1)) phi_t; p = 567 / ((T/24)(E/3)); Q = 13600 / (E/3);
    Vmin = 500, Vmax = 2000, v1 = 500. Scaling keeps totals comparable as the
    grid is refined in T or E.
    """
    if E < 2:
        raise ValueError("benchmark cost formula needs E >= 2")

    def phi_stage(t):
        return 1.0 + 0.5 * math.sin(2.0 * math.pi * (t - 2) / T)

    c = np.empty((T, E))
    for t in range(1, T + 1):
        for e in range(1, E + 1):
            c[t - 1, e - 1] = (1.0 + (e - 1.0) / (E - 1.0)) * phi_stage(t)
    p = np.full((T, E), 567.0 / ((T / 24.0) * (E / 3.0)))
    Q = np.full(E, 13600.0 / (E / 3.0))
    demand_stages = np.arange(2, T + 2)
    phi_d = np.array([phi_stage(t) for t in demand_stages])
    base = 1000.0 * phi_d / (T / 24.0)
    return ProductionInventorySpec(
        T=T, E=E, c=c, p=p, Q=Q, Vmin=500.0, Vmax=2000.0, v1=500.0,
        demand_lo=(1.0 - theta) * base, demand_hi=(1.0 + theta) * base,
    )


def gen_newsvendor(spec: NewsvendorSpec) -> ROInstance:
    """Emit the newsvendor problem with per-period cost epigraph decisions.

    Decisions per stage: j = 1 the order quantity x_t, j = 2 an auxiliary
    z_t with z_{t+1} at least the holding cost and at least the backorder
    cost of period t. The objective charges c_t x_t for t <= T, the dummy
    order at cost 1, and every z_t. Holding row for period t:

        -z_{t+1} + h_t sum_{l<=t} x_l - h_t sum_{s=2}^{t+1} zeta_s <= -h_t v1

    and the backorder row mirrors it with slope -b_t. Note the demand sum
    starts at s = 2; the constant stage carries no demand.
    """
    T = spec.T
    H, n = T + 1, 2
    acc = _RowAccum(H, n)

    for t in range(1, H + 1):
        c_t = spec.c[t - 1] if t <= T else 1.0
        if c_t != 0.0:
            acc.set_a(t, 1, c_t)
        acc.set_a(t, 2, 1.0)
    acc.finish_objective()

    for t in range(1, T + 1):
        h_t = spec.h[t - 1]
        for l in range(1, t + 1):
            if h_t != 0.0:
                acc.set_a(l, 1, h_t)
        acc.set_a(t + 1, 2, -1.0)
        for s in range(2, t + 2):
            if h_t != 0.0:
                acc.set_b(s, h_t)
        acc.next_row("inventory-ub", -h_t * spec.v1)

        b_t = spec.b[t - 1]
        for l in range(1, t + 1):
            if b_t != 0.0:
                acc.set_a(l, 1, -b_t)
        acc.set_a(t + 1, 2, -1.0)
        for s in range(2, t + 2):
            if b_t != 0.0:
                acc.set_b(s, -b_t)
        acc.next_row("inventory-lb", b_t * spec.v1)

    for t in range(1, H + 1):
        p_t = spec.p[t - 1] if t <= T else 0.0
        acc.set_a(t, 1, 1.0)
        acc.next_row("bound-ub", p_t)
        acc.set_a(t, 1, -1.0)
        acc.next_row("bound-lb", 0.0)

    acc.set_a(1, 2, -1.0)
    acc.next_row("bound-lb", 0.0)  # z_1 >= 0

    meta = {
        "generator": "newsvendor",
        "T": T,
        "E": 1,
        "params": {"v1": spec.v1},
    }
    return acc.build(_box(T, spec.demand_lo, spec.demand_hi), meta)


def random_newsvendor(T: int, rng: np.random.Generator) -> NewsvendorSpec:
    """Seeded random cost/capacity draw used by the experiment harness."""
    c = rng.uniform(0.5, 2.0, size=T)
    h = rng.uniform(0.1, 1.5, size=T)
    b = rng.uniform(0.5, 3.0, size=T)
    mean = rng.uniform(50.0, 150.0)
    spread = rng.uniform(0.2, 0.5)
    center = mean * (1.0 + 0.3 * np.sin(np.linspace(0.0, 2.0 * math.pi, T)))
    lo = center * (1.0 - spread)
    hi = center * (1.0 + spread)
    p = np.full(T, float(np.ceil(1.8 * center.max())))
    v1 = float(rng.uniform(0.0, mean))
    return NewsvendorSpec(T=T, c=c, h=h, b=b, p=p, v1=v1, demand_lo=lo, demand_hi=hi)
