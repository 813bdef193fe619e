"""Discrete-event simulation of the two-hop tandem with priority at hop 2.

Class-1 packets queue FCFS at an exponential first hop and then join the
high-priority line of the second hop; class-2 packets enter the low-priority
line directly.  The second hop serves the head of the class-1 line whenever
it is non-empty, but never interrupts a service in progress.

The calendar is a binary heap keyed by ``(time, rank, packet id)``; external
arrivals (rank 0) and first-hop completions (rank 1, which are arrivals at
hop 2) precede second-hop departures (rank 2) at equal timestamps.  Five
independent generators (inter-arrival times, class marks, hop-1 service,
hop-2 class-1 service, hop-2 class-2 service) are spawned from one seed, so
each stream's draws do not depend on event interleaving.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ResourceError, UndefinedMetricError
from .params import SystemParams

__all__ = [
    "Packet",
    "PacketTable",
    "ClassStats",
    "SimReport",
    "run_simulation",
    "aoi_time_average",
    "peak_age_samples",
    "empirical_lst",
    "batch_means",
    "write_trace",
    "TRACE_COLUMNS",
]

_ARR, _HOP1, _HOP2 = 0, 1, 2
_BLOCK = 8192

TRACE_COLUMNS = ("time", "event", "class", "packet_id", "node")


@dataclass(frozen=True)
class Packet:
    """Lifecycle of one packet.  ``t_enter_node2 == t_gen`` for class 2."""

    cls: int
    seq: int
    t_gen: float
    t_enter_node2: float
    t_service_start_node2: float
    t_depart: float


@dataclass
class PacketTable:
    """Column store of every generated packet, indexed by packet id.

    Times that did not happen (class-2 first hop, undelivered packets) are
    NaN.  ``case`` holds the class-1 case label 1..6 (0 for class 2).
    """

    cls: np.ndarray
    seq: np.ndarray
    t_gen: np.ndarray
    t_start1: np.ndarray
    t_dep1: np.ndarray
    svc1: np.ndarray
    t_enter2: np.ndarray
    t_start2: np.ndarray
    t_dep2: np.ndarray
    svc2: np.ndarray
    low_in_service: np.ndarray
    case: np.ndarray

    def __len__(self):
        return len(self.cls)

    def packet(self, i: int) -> Packet:
        return Packet(
            int(self.cls[i]),
            int(self.seq[i]),
            float(self.t_gen[i]),
            float(self.t_enter2[i]),
            float(self.t_start2[i]),
            float(self.t_dep2[i]),
        )

    def delivered(self, j: int):
        """Ids of delivered class-``j`` packets in generation order."""
        return np.flatnonzero((self.cls == j) & ~np.isnan(self.t_dep2))


@dataclass
class ClassStats:
    """Per-class simulation statistics (post-warmup).

    ``ci_*`` are 95% batch-means half-widths.
    """

    count: int
    mean_T: float
    var_T: float
    mean_A: float
    var_A: float
    aoi: float
    ci_T: float
    ci_A: float
    ci_aoi: float
    T: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    horizon: tuple = (0.0, 0.0)
    cdf_T: np.ndarray | None = field(default=None, repr=False)
    cdf_A: np.ndarray | None = field(default=None, repr=False)
    lst_T: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "count": self.count,
            "mean_T": self.mean_T,
            "var_T": self.var_T,
            "mean_A": self.mean_A,
            "var_A": self.var_A,
            "aoi": self.aoi,
            "ci_T": self.ci_T,
            "ci_A": self.ci_A,
            "ci_aoi": self.ci_aoi,
        }


@dataclass
class SimReport:
    params: SystemParams
    n_packets: int
    seed: int
    warmup_fraction: float
    t_warmup: float
    t_end: float
    class1: ClassStats | None
    class2: ClassStats | None
    packets: PacketTable = field(repr=False)
    n_generated: dict = field(default_factory=dict)
    n_delivered: dict = field(default_factory=dict)
    n_in_system: dict = field(default_factory=dict)
    trace: list | None = field(default=None, repr=False)
    cdf_grid: np.ndarray | None = field(default=None, repr=False)
    priority_inversion: bool = False

    def stats(self, j: int) -> ClassStats | None:
        return self.class1 if j == 1 else self.class2

    def summary(self) -> dict:
        out = {
            "n_packets": self.n_packets,
            "seed": self.seed,
            "t_warmup": self.t_warmup,
            "t_end": self.t_end,
        }
        for j in (1, 2):
            st = self.stats(j)
            if st is not None:
                for k, v in st.summary().items():
                    out[f"class{j}.{k}"] = v
        return out

    def format(self) -> str:
        lines = [
            f"params: {self.params.describe()}",
            f"packets={self.n_packets} seed={self.seed} warmup_time={self.t_warmup:.3f} end={self.t_end:.3f}",
        ]
        for j in (1, 2):
            st = self.stats(j)
            if st is None:
                lines.append(f"class {j}: no traffic")
                continue
            lines.append(f"class {j}: n={st.count}")
            lines.append(f"  E[T{j}] = {st.mean_T:.5f} +- {st.ci_T:.5f}")
            lines.append(f"  E[A{j}] = {st.mean_A:.5f} +- {st.ci_A:.5f}")
            lines.append(f"  E[D{j}] = {st.aoi:.5f} +- {st.ci_aoi:.5f}")
        return "\n".join(lines)


def _stream(draw):
    while True:
        yield from draw(_BLOCK).tolist()


def run_simulation(
    params: SystemParams,
    n_packets: int = 100_000,
    seed: int = 0,
    warmup_fraction: float = 0.1,
    *,
    cdf_grid=None,
    lst_points=(),
    n_batches: int = 20,
    trace: bool = False,
    priority_inversion: bool = False,
    max_calendar: int = 1_000_000,
) -> SimReport:
    """Simulate until ``n_packets`` second-hop departures.

    Statistics use packets generated after the warmup time, defined as the
    epoch of departure number ``ceil(warmup_fraction * n_packets)``.  The
    time-average age is taken from the warmup time (or the first delivery of
    the class, if later) to the last delivery of the class.

    Args:
        params: stable parameter point.
        n_packets: total departures to simulate, at least 1000.
        seed: root seed for the five random streams.
        warmup_fraction: fraction of departures treated as transient.
        cdf_grid: optional time grid for empirical CDFs of T and A.
        lst_points: ``s`` values at which to estimate ``E[exp(-s T)]``.
        n_batches: batches for the confidence half-widths.
        trace: keep a per-event log (see :data:`TRACE_COLUMNS`).
        priority_inversion: fault injection; serve class 2 first at hop 2.
        max_calendar: limit on pending events.

    Raises:
        StabilityError: via ``params`` construction for unstable inputs.
        DomainError: bad ``n_packets`` or ``warmup_fraction``.
        ResourceError: the calendar outgrew ``max_calendar``.
    """
    if n_packets < 1000:
        raise DomainError("n_packets must be at least 1000")
    if not 0 <= warmup_fraction < 0.5:
        raise DomainError("warmup_fraction must lie in [0, 0.5)")
    P = params
    gens = [np.random.Generator(np.random.PCG64(c)) for c in np.random.SeedSequence(seed).spawn(5)]
    g_arr, g_mark, g_hop1, g_s1, g_s2 = gens
    inter = _stream(lambda k: g_arr.exponential(1 / P.lam, k))
    mark = _stream(lambda k: g_mark.random(k))
    s_hop1 = _stream(lambda k: g_hop1.exponential(1 / P.mu, k))
    s_c1 = _stream(lambda k: np.asarray(P.svc1.sample(g_s1, k), dtype=float))
    s_c2 = _stream(lambda k: np.asarray(P.svc2.sample(g_s2, k), dtype=float))
    p = P.p
    nan = math.nan

    cls_l, gen_l = [], []
    st1_l, dp1_l, sv1_l = [], [], []
    en2_l, st2_l, dp2_l, sv2_l, low_l = [], [], [], [], []

    heap = []
    push, pop = heapq.heappush, heapq.heappop
    q11 = deque()
    q1, q2 = deque(), deque()
    hop1_busy = False
    in_service = -1
    delivered = 0
    dep_times = []
    log = [] if trace else None

    def start2(pid, t):
        st2_l[pid] = t
        svc = next(s_c1) if cls_l[pid] == 1 else next(s_c2)
        sv2_l[pid] = svc
        push(heap, (t + svc, _HOP2, pid))
        if log is not None:
            log.append((t, "service_start", cls_l[pid], pid, 2))

    push(heap, (next(inter), _ARR, 0))
    while delivered < n_packets:
        t, kind, pid = pop(heap)
        if kind == _ARR:
            c = 1 if next(mark) < p else 2
            cls_l.append(c)
            gen_l.append(t)
            sv2_l.append(nan)
            st2_l.append(nan)
            dp2_l.append(nan)
            push(heap, (t + next(inter), _ARR, pid + 1))
            if log is not None:
                log.append((t, "arrival", c, pid, 1 if c == 1 else 2))
            if c == 1:
                en2_l.append(nan)
                low_l.append(False)
                dp1_l.append(nan)
                if hop1_busy:
                    st1_l.append(nan)
                    sv1_l.append(nan)
                    q11.append(pid)
                else:
                    hop1_busy = True
                    svc = next(s_hop1)
                    st1_l.append(t)
                    sv1_l.append(svc)
                    push(heap, (t + svc, _HOP1, pid))
                    if log is not None:
                        log.append((t, "service_start", 1, pid, 1))
                continue
            st1_l.append(nan)
            dp1_l.append(nan)
            sv1_l.append(nan)
            en2_l.append(nan)
            low_l.append(False)
            # class 2 arrives at hop 2 immediately
        elif kind == _HOP1:
            dp1_l[pid] = t
            if log is not None:
                log.append((t, "departure", 1, pid, 1))
                log.append((t, "arrival", 1, pid, 2))
            if q11:
                nxt = q11.popleft()
                svc = next(s_hop1)
                st1_l[nxt] = t
                sv1_l[nxt] = svc
                push(heap, (t + svc, _HOP1, nxt))
                if log is not None:
                    log.append((t, "service_start", 1, nxt, 1))
            else:
                hop1_busy = False
        else:
            dp2_l[pid] = t
            delivered += 1
            dep_times.append(t)
            if log is not None:
                log.append((t, "departure", cls_l[pid], pid, 2))
            if priority_inversion:
                line = q2 if q2 else q1
            else:
                line = q1 if q1 else q2
            if line:
                in_service = line.popleft()
                start2(in_service, t)
            else:
                in_service = -1
            continue

        # arrival at hop 2 (class 2 from outside or class 1 from hop 1)
        en2_l[pid] = t
        low_l[pid] = in_service >= 0 and cls_l[in_service] == 2
        if in_service < 0:
            in_service = pid
            start2(pid, t)
        elif cls_l[pid] == 1:
            q1.append(pid)
        else:
            q2.append(pid)
        if len(heap) > max_calendar:
            raise ResourceError(f"event calendar exceeded {max_calendar} entries")

    cls = np.asarray(cls_l, dtype=np.int8)
    table = PacketTable(
        cls=cls,
        seq=np.zeros(len(cls), dtype=np.int64),
        t_gen=np.asarray(gen_l),
        t_start1=np.asarray(st1_l),
        t_dep1=np.asarray(dp1_l),
        svc1=np.asarray(sv1_l),
        t_enter2=np.asarray(en2_l),
        t_start2=np.asarray(st2_l),
        t_dep2=np.asarray(dp2_l),
        svc2=np.asarray(sv2_l),
        low_in_service=np.asarray(low_l, dtype=bool),
        case=np.zeros(len(cls), dtype=np.int8),
    )
    for j in (1, 2):
        m = cls == j
        table.seq[m] = np.arange(int(m.sum()))
    _classify_cases(table)

    k_w = math.ceil(warmup_fraction * n_packets)
    t_w = dep_times[k_w - 1] if k_w > 0 else 0.0
    t_end = dep_times[-1]
    grid = None if cdf_grid is None else np.asarray(cdf_grid, dtype=float)
    report = SimReport(
        params=P,
        n_packets=n_packets,
        seed=seed,
        warmup_fraction=warmup_fraction,
        t_warmup=t_w,
        t_end=t_end,
        class1=None,
        class2=None,
        packets=table,
        trace=log,
        cdf_grid=grid,
        priority_inversion=priority_inversion,
    )
    for j in (1, 2):
        m = cls == j
        n_gen = int(m.sum())
        n_del = int((m & ~np.isnan(table.t_dep2)).sum())
        report.n_generated[j] = n_gen
        report.n_delivered[j] = n_del
        report.n_in_system[j] = n_gen - n_del
        st = _class_stats(table, j, t_w, grid, lst_points, n_batches)
        if j == 1:
            report.class1 = st
        else:
            report.class2 = st
    return report


def _classify_cases(tab: PacketTable):
    """Label each class-1 packet with its case 1..6 relative to its predecessor.

    Cases 1-3 have no first-hop wait, 4-6 do.  Within each group: the
    predecessor still at hop 2 on arrival (2, 5), else a class-2 packet in
    service (3, 6), else an idle second hop (1, 4).
    """
    ids = np.flatnonzero(tab.cls == 1)
    if len(ids) < 2:
        return
    cur, prev = ids[1:], ids[:-1]
    waited1 = tab.t_start1[cur] > tab.t_gen[cur]
    behind_prev = tab.t_enter2[cur] < tab.t_dep2[prev]
    low = tab.low_in_service[cur]
    base = np.where(behind_prev, 2, np.where(low, 3, 1))
    lab = base + np.where(waited1, 3, 0)
    lab = np.where(np.isnan(tab.t_enter2[cur]), 0, lab)
    tab.case[cur] = lab


def batch_means(x, n_batches: int = 20):
    """Mean and 95% half-width from ``n_batches`` contiguous batches."""
    x = np.asarray(x, dtype=float)
    if len(x) < n_batches:
        return float(np.mean(x)) if len(x) else math.nan, math.nan
    means = np.array([b.mean() for b in np.array_split(x, n_batches)])
    half = stats.t.ppf(0.975, n_batches - 1) * means.std(ddof=1) / math.sqrt(n_batches)
    return float(x.mean()), float(half)


def _class_stats(tab, j, t_w, grid, lst_points, n_batches):
    ids = tab.delivered(j)
    if len(ids) < 2:
        return None
    g = tab.t_gen[ids]
    d = tab.t_dep2[ids]
    keep = g >= t_w
    T = (d - g)[keep]
    A = (d[1:] - g[:-1])[keep[1:]]
    if len(T) < 2 or len(A) < 2:
        return None
    mean_T, ci_T = batch_means(T, n_batches)
    mean_A, ci_A = batch_means(A, n_batches)
    a = max(t_w, d[0])
    b = d[-1]
    aoi = aoi_time_average(zip(g, d), (a, b))
    edges = np.linspace(a, b, n_batches + 1)
    parts = [aoi_time_average(zip(g, d), (edges[i], edges[i + 1])) for i in range(n_batches)]
    ci_aoi = float(stats.t.ppf(0.975, n_batches - 1) * np.std(parts, ddof=1) / math.sqrt(n_batches))
    st = ClassStats(
        count=len(T),
        mean_T=mean_T,
        var_T=float(T.var(ddof=1)),
        mean_A=mean_A,
        var_A=float(A.var(ddof=1)),
        aoi=aoi,
        ci_T=ci_T,
        ci_A=ci_A,
        ci_aoi=ci_aoi,
        T=T,
        A=A,
        horizon=(float(a), float(b)),
    )
    if grid is not None:
        st.cdf_T = _ecdf(T, grid)
        st.cdf_A = _ecdf(A, grid)
    for s in lst_points:
        st.lst_T[float(s)] = empirical_lst(T, s)
    return st


def _ecdf(x, grid):
    xs = np.sort(x)
    return np.searchsorted(xs, grid, side="right") / len(xs)


def aoi_time_average(deliveries, horizon) -> float:
    """Exact time average of the age sawtooth over ``horizon``.

    ``deliveries`` is an iterable of ``(t_gen, t_depart)`` sorted by
    departure.  Between departures the age grows linearly from the delay of
    the latest delivered packet; after the last departure the ramp simply
    continues.  The horizon must start at or after the first departure.
    """
    arr = np.asarray(list(deliveries), dtype=float)
    if arr.size == 0:
        raise UndefinedMetricError("no deliveries")
    arr = arr.reshape(-1, 2)
    g, d = arr[:, 0], arr[:, 1]
    a, b = float(horizon[0]), float(horizon[1])
    if not b > a:
        raise UndefinedMetricError("horizon must have positive length")
    if a < d[0]:
        raise UndefinedMetricError("age is undefined before the first delivery")
    nxt = np.append(d[1:], np.inf)
    lo = np.clip(d, a, b)
    hi = np.clip(nxt, a, b)
    area = np.sum((hi - lo) * (0.5 * (hi + lo) - g))
    return float(area / (b - a))


def peak_age_samples(deliveries) -> np.ndarray:
    """Peak ages ``t'_i - t_gen(i-1)`` for ``i >= 2`` of in-order deliveries."""
    arr = np.asarray(list(deliveries), dtype=float).reshape(-1, 2)
    if len(arr) < 2:
        raise UndefinedMetricError("peak age needs at least two deliveries")
    return arr[1:, 1] - arr[:-1, 0]


def empirical_lst(samples, s):
    """Sample mean of ``exp(-s x)``."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise UndefinedMetricError("no samples")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("s must be non-negative")
    if s_arr.ndim == 0:
        return float(np.mean(np.exp(-float(s_arr) * x)))
    return np.array([np.mean(np.exp(-v * x)) for v in s_arr])


def write_trace(report: SimReport, path) -> None:
    """Write the event log as comma-separated text with :data:`TRACE_COLUMNS`.

    ``event`` is one of arrival, service_start, departure; ``node`` is 1 or 2.
    """
    if report.trace is None:
        raise UndefinedMetricError("simulation was run without trace=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t, ev, c, pid, node in report.trace:
            w.writerow((repr(float(t)), ev, c, pid, node))
