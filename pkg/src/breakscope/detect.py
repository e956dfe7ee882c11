"""Change-point detectors scored by the MDL marginal likelihood.

Local methods
    ``BS`` / ``WBS``: binary and wild binary segmentation on the cumsum
    mean-shift statistic.  ``BSMDL`` / ``WBSMDL``: the same searches driven by
    the log Bayes factor of a split against no split.
Global methods
    ``GMDL``: exact optimal partitioning over every admissible segment.
    ``PGMDL``: the same dynamic program restricted to the local maxima of the
    full-sample split statistic.
``ORACLE``
    exhaustive enumeration, used to check the dynamic programs.

All segments are half-open ``(a, b]`` over dataset rows ``1..T``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.ndimage import maximum_filter1d

from .exceptions import ComputationGuardError, InvalidSegmentationError
from .mdl import (
    MdlScore,
    calibrate,
    default_min_duration,
    ln_plus,
    log_marginal_from_ssr,
    mdl_marginal_loglik,
    segment_log_marginal,
)
from .segstats import Segmentation, TimeSeriesDataset, batched_ols, segment_stats, segment_sums

__all__ = [
    "Method",
    "DetectorConfig",
    "MethodResult",
    "cumsum_statistic",
    "bsmdl_statistic",
    "binary_segmentation",
    "wild_binary_segmentation",
    "scan_candidates",
    "pgmdl",
    "gmdl",
    "brute_force",
    "detect",
    "LOCAL_METHODS",
]

# Bound on the number of (segment or split) evaluations held in memory at once.
_CHUNK = 1 << 20


class Method(str, Enum):
    BS = "BS"
    WBS = "WBS"
    BSMDL = "BSMDL"
    WBSMDL = "WBSMDL"
    PGMDL = "PGMDL"
    GMDL = "GMDL"
    ORACLE = "ORACLE"

    @classmethod
    def parse(cls, name) -> "Method":
        if isinstance(name, Method):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown method {name!r}; choose from {[m.value for m in cls]}") from None


# Canonical order for tie-breaking in selection.
LOCAL_METHODS = (Method.BS, Method.WBS, Method.BSMDL, Method.WBSMDL, Method.PGMDL)
_METHOD_CODE = {m: i for i, m in enumerate(Method)}


@dataclass(frozen=True)
class DetectorConfig:
    """Tuning shared by all detectors.

    ``min_duration`` and ``scan_radius`` default to data-dependent values
    (see :meth:`resolve`).  ``cumsum_threshold`` applies to BS/WBS only; when
    ``None`` it is ``1.3 sqrt(2 ln T)`` times a MAD noise scale.
    """

    threshold_delta: float = 3.0
    wbs_intervals: int = 1000
    min_duration: int | None = None
    max_breaks: int = 50
    scan_radius: int | None = None
    rng_seed: int = 0
    cumsum_threshold: float | None = None
    gmdl_max_T: int = 8192

    def __post_init__(self):
        if not self.threshold_delta >= 0:
            raise ValueError("threshold_delta must be >= 0")
        if self.wbs_intervals < 1:
            raise ValueError("wbs_intervals must be >= 1")
        if self.max_breaks < 0:
            raise ValueError("max_breaks must be >= 0")
        if self.scan_radius is not None and self.scan_radius < 1:
            raise ValueError("scan_radius must be >= 1")
        if self.min_duration is not None and self.min_duration < 1:
            raise ValueError("min_duration must be >= 1")

    def resolve(self, ds: TimeSeriesDataset) -> "DetectorConfig":
        """Fill data-dependent defaults for ``ds``."""
        d = self.min_duration if self.min_duration is not None else default_min_duration(ds.T, ds.K)
        h = self.scan_radius if self.scan_radius is not None else max(1, int(round(math.log(ds.T))))
        return replace(self, min_duration=int(d), scan_radius=int(h))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MethodResult:
    """Output of one detector run on one dataset."""

    method_id: Method
    segmentation: Segmentation
    score: MdlScore
    runtime_ms: float | None = None
    diagnostics: dict = field(default_factory=dict)
    regime_params: tuple = ()

    @property
    def breaks(self) -> tuple[int, ...]:
        return self.segmentation.tau

    @property
    def m(self) -> int:
        return self.segmentation.m

    def to_dict(self, time_offset: int = 0, include_timing: bool = True) -> dict:
        """JSON-ready dict; break dates are shifted by ``time_offset`` (1-based input time)."""
        return {
            "method": self.method_id.value,
            "breaks": [int(t) + time_offset for t in self.segmentation.tau],
            "T": self.segmentation.T,
            "time_offset": int(time_offset),
            "score": self.score.to_dict(),
            "per_segment_params": [
                {"beta": [float(v) for v in p["beta"]], "sigma2": float(p["sigma2"])}
                for p in self.regime_params
            ],
            "runtime_ms": self.runtime_ms if include_timing else None,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodResult":
        off = int(d.get("time_offset", 0))
        seg = Segmentation(tuple(int(t) - off for t in d["breaks"]), int(d["T"]))
        params = tuple(
            {"beta": np.array(p["beta"], dtype=float), "sigma2": float(p["sigma2"])}
            for p in d["per_segment_params"]
        )
        return cls(
            Method.parse(d["method"]),
            seg,
            MdlScore.from_dict(d["score"]),
            d.get("runtime_ms"),
            d.get("diagnostics", {}),
            params,
        )


# ---------------------------------------------------------------------------
# vectorized segment scores


def _pair_log_marginal(ds: TimeSeriesDataset, a, b, *, m: int, T_cal: int):
    xtx, xty, yty = segment_sums(ds, a, b)
    _, ssr, _, _ = batched_ols(xtx, xty, yty)
    return log_marginal_from_ssr(np.asarray(b) - np.asarray(a), ssr, ds.K, T_cal, m)


def _split_stats(ds: TimeSeriesDataset, s, taus, e):
    """BSMDL statistic for splits ``taus`` of intervals ``(s, e]`` (1-d arrays of equal length)."""
    s, taus, e = (np.asarray(v, dtype=np.int64) for v in (s, taus, e))
    T_loc = e - s
    left = _pair_log_marginal(ds, s, taus, m=1, T_cal=T_loc)
    right = _pair_log_marginal(ds, taus, e, m=1, T_cal=T_loc)
    whole = _pair_log_marginal(ds, s, e, m=0, T_cal=T_loc)
    with np.errstate(invalid="ignore"):
        val = left + right - whole
    return np.where(np.isnan(val), -np.inf, val)


def _cumsum_stats(ds: TimeSeriesDataset, s, taus, e):
    """Absolute cumsum contrast for splits ``taus`` of ``(s, e]``."""
    S = ds.prefix_xty[:, 0]  # intercept column: running sum of y
    s, taus, e = (np.asarray(v, dtype=np.int64) for v in (s, taus, e))
    n = (e - s).astype(float)
    nl = (taus - s).astype(float)
    nr = (e - taus).astype(float)
    left = S[taus] - S[s]
    right = S[e] - S[taus]
    return np.abs(np.sqrt(nr / (n * nl)) * left - np.sqrt(nl / (n * nr)) * right)


def cumsum_statistic(ds: TimeSeriesDataset, a: int, b: int, tau: int) -> float:
    """Signed cumsum contrast for splitting ``(a, b]`` after ``tau``.

    ``sqrt(nr/(n nl)) * sum(y[a+1..tau]) - sqrt(nl/(n nr)) * sum(y[tau+1..b])``
    with ``nl = tau - a``, ``nr = b - tau``, ``n = b - a``.
    """
    if not a < tau < b or a < 0 or b > ds.T:
        raise ValueError(f"need 0 <= a < tau < b <= T, got a={a}, tau={tau}, b={b}")
    S = ds.prefix_xty[:, 0]
    n, nl, nr = b - a, tau - a, b - tau
    return float(math.sqrt(nr / (n * nl)) * (S[tau] - S[a]) - math.sqrt(nl / (n * nr)) * (S[b] - S[tau]))


def bsmdl_statistic(ds: TimeSeriesDataset, a: int, b: int, tau: int, min_duration: int | None = None) -> float:
    """Log Bayes factor of splitting ``(a, b]`` after ``tau`` versus no split.

    Both models are calibrated on the interval alone (local ``T = b - a``,
    local ``m`` of 1 and 0).  Returns ``-inf`` when either piece is shorter
    than ``min_duration``.
    """
    if not 0 <= a < b <= ds.T:
        raise ValueError(f"invalid interval ({a}, {b}]")
    d = default_min_duration(ds.T, ds.K) if min_duration is None else min_duration
    if tau - a < d or b - tau < d:
        return -math.inf
    return float(_split_stats(ds, np.array([a]), np.array([tau]), np.array([b]))[0])


def _cumsum_default_threshold(ds: TimeSeriesDataset) -> float:
    diffs = np.diff(ds.y)
    if diffs.size == 0:
        return math.inf
    mad = np.median(np.abs(diffs - np.median(diffs)))
    sigma = mad / (0.6744897501960817 * math.sqrt(2.0))
    return 1.3 * math.sqrt(2.0 * math.log(ds.T)) * sigma


def _statistic_fn(statistic: str):
    if statistic == "bsmdl":
        return _split_stats
    if statistic == "cumsum":
        return _cumsum_stats
    raise ValueError(f"unknown statistic {statistic!r}")


def _threshold(ds, cfg: DetectorConfig, statistic: str) -> float:
    if statistic == "bsmdl":
        return cfg.threshold_delta
    return cfg.cumsum_threshold if cfg.cumsum_threshold is not None else _cumsum_default_threshold(ds)


# ---------------------------------------------------------------------------
# result helpers


def _regime_params(ds: TimeSeriesDataset, seg: Segmentation) -> tuple:
    params = []
    for a, b in seg.segments:
        st = segment_stats(ds, a, b)
        params.append({"beta": st.beta_hat.copy(), "sigma2": st.ssr / st.n})
    return tuple(params)


def _finish(ds, cfg, method, breaks, t0, diagnostics) -> MethodResult:
    seg = Segmentation.from_breaks(breaks, ds.T)
    try:
        score = mdl_marginal_loglik(ds, seg, cfg.min_duration)
        params = _regime_params(ds, seg)
    except Exception:  # singular regime: keep the segmentation, flag the score
        score = MdlScore(-math.inf, (), {})
        params = ()
    return MethodResult(
        method, seg, score, (time.perf_counter() - t0) * 1e3, diagnostics, params
    )


def _rng(cfg: DetectorConfig, method: Method) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(cfg.rng_seed) & (2**63 - 1), _METHOD_CODE[method]]))


# ---------------------------------------------------------------------------
# binary segmentation


def binary_segmentation(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None, statistic: str = "bsmdl") -> MethodResult:
    """Recursive binary segmentation with the cumsum or BSMDL split statistic.

    On each active interval the split maximizing the statistic is accepted
    when it exceeds the threshold; both halves are then searched in turn.
    """
    t0 = time.perf_counter()
    cfg = (cfg or DetectorConfig()).resolve(ds)
    d = cfg.min_duration
    stat_fn = _statistic_fn(statistic)
    thresh = _threshold(ds, cfg, statistic)
    breaks: list[int] = []
    trace = []
    stack = [(0, ds.T)]
    while stack and len(breaks) < cfg.max_breaks:
        a, b = stack.pop()
        if b - a < 2 * d:
            continue
        taus = np.arange(a + d, b - d + 1)
        vals = stat_fn(ds, np.full(taus.shape, a), taus, np.full(taus.shape, b))
        k = int(np.argmax(vals))
        tau, val = int(taus[k]), float(vals[k])
        accepted = val > thresh
        trace.append({"a": a, "b": b, "tau": tau, "stat": _finite_or_none(val), "accepted": bool(accepted)})
        if accepted:
            breaks.append(tau)
            stack.append((tau, b))
            stack.append((a, tau))
    method = Method.BSMDL if statistic == "bsmdl" else Method.BS
    return _finish(ds, cfg, method, breaks, t0, {"threshold": thresh, "trace": trace})


def _finite_or_none(v: float):
    return float(v) if math.isfinite(v) else None


def _draw_intervals(rng: np.random.Generator, a: int, b: int, min_len: int, N: int):
    """N sub-intervals ``(s, e]`` of ``(a, b]``, uniform over pairs with ``e - s >= min_len``."""
    n = b - a
    lengths = np.arange(min_len, n + 1)
    weights = (n - lengths + 1).astype(float)
    lens = rng.choice(lengths, size=N, p=weights / weights.sum())
    starts = a + rng.integers(0, n - lens + 1)
    return starts, starts + lens


def _expand_splits(starts, ends, d):
    counts = ends - starts - 2 * d + 1
    owner = np.repeat(np.arange(starts.size), counts)
    offs = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
    return owner, starts[owner] + d + offs


def wild_binary_segmentation(
    ds: TimeSeriesDataset, cfg: DetectorConfig | None = None, statistic: str = "bsmdl"
) -> MethodResult:
    """Wild binary segmentation over ``cfg.wbs_intervals`` random sub-intervals.

    Each active interval gets a fresh draw of sub-intervals (plus the interval
    itself).  The largest sub-interval statistic decides acceptance; the break
    is placed at the maximizer of the whole-interval statistic within the
    winning sub-interval.
    """
    t0 = time.perf_counter()
    cfg = (cfg or DetectorConfig()).resolve(ds)
    d = cfg.min_duration
    stat_fn = _statistic_fn(statistic)
    thresh = _threshold(ds, cfg, statistic)
    method = Method.WBSMDL if statistic == "bsmdl" else Method.WBS
    rng = _rng(cfg, method)
    breaks: list[int] = []
    trace = []
    stack = [(0, ds.T)]
    while stack and len(breaks) < cfg.max_breaks:
        a, b = stack.pop()
        if b - a < 2 * d:
            continue
        s, e = _draw_intervals(rng, a, b, 2 * d, cfg.wbs_intervals)
        s = np.append(s, a)
        e = np.append(e, b)
        owner, taus = _expand_splits(s, e, d)
        vals = np.empty(taus.size)
        for lo in range(0, taus.size, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            vals[sl] = stat_fn(ds, s[owner[sl]], taus[sl], e[owner[sl]])
        k = int(np.argmax(vals))
        best_val = float(vals[k])
        win = owner[k]
        accepted = best_val > thresh
        tau = int(taus[k])
        if accepted:
            cand = np.arange(s[win] + d, e[win] - d + 1)
            full = stat_fn(ds, np.full(cand.shape, a), cand, np.full(cand.shape, b))
            tau = int(cand[int(np.argmax(full))])
        trace.append(
            {
                "a": a,
                "b": b,
                "interval": [int(s[win]), int(e[win])],
                "tau": tau,
                "stat": _finite_or_none(best_val),
                "accepted": bool(accepted),
            }
        )
        if accepted:
            breaks.append(tau)
            stack.append((tau, b))
            stack.append((a, tau))
    return _finish(ds, cfg, method, breaks, t0, {"threshold": thresh, "trace": trace})


# ---------------------------------------------------------------------------
# global methods


def _optimal_partition(cost: np.ndarray, max_breaks: int):
    """Maximize ``sum(segment costs) - ln_plus(m)`` over paths from node 0 to node P-1.

    ``cost[i, j]`` scores the segment between nodes i < j (``-inf`` when
    inadmissible).  Returns ``(best_m, node_path, totals_by_m)``.
    """
    P = cost.shape[0]
    F = cost[0].copy()
    totals = [F[-1]]
    backs = []
    cols = max(1, _CHUNK // max(P, 1))
    for k in range(1, max_breaks + 1):
        newF = np.empty(P)
        arg = np.empty(P, dtype=np.int64)
        for lo in range(0, P, cols):
            cand = F[:, None] + cost[:, lo : lo + cols]
            a = np.argmax(cand, axis=0)
            arg[lo : lo + cols] = a
            newF[lo : lo + cols] = cand[a, np.arange(cand.shape[1])]
        F = newF
        backs.append(arg)
        totals.append(F[-1] - ln_plus(k))
        if not np.isfinite(F).any():
            break
    totals = np.array(totals)
    k_best = int(np.argmax(totals))
    path = [P - 1]
    for k in range(k_best, 0, -1):
        path.append(int(backs[k - 1][path[-1]]))
    path.append(0)
    return k_best, path[::-1], totals


def scan_candidates(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None) -> list[int]:
    """Local maxima of the full-sample BSMDL statistic within a window of radius ``h``.

    ``l`` is kept when ``h <= l <= T-h`` and its statistic equals the maximum
    over ``l-h < t < l+h``.
    """
    cfg = (cfg or DetectorConfig()).resolve(ds)
    d, h, T = cfg.min_duration, cfg.scan_radius, ds.T
    if T <= 2 * h or T < 2 * d:
        return []
    profile = np.full(T + 1, -np.inf)
    taus = np.arange(d, T - d + 1)
    profile[taus] = _split_stats(ds, np.zeros_like(taus), taus, np.full(taus.shape, T))
    wmax = maximum_filter1d(profile, size=2 * h - 1, mode="constant", cval=-np.inf)
    ls = np.arange(h, T - h + 1)
    keep = np.isfinite(profile[ls]) & (profile[ls] == wmax[ls])
    return [int(v) for v in ls[keep]]


def _node_costs(ds: TimeSeriesDataset, nodes: np.ndarray, d: int) -> np.ndarray:
    P = nodes.size
    cost = np.full((P, P), -np.inf)
    i, j = np.triu_indices(P, k=1)
    ok = nodes[j] - nodes[i] >= d
    i, j = i[ok], j[ok]
    for lo in range(0, i.size, _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        cost[i[sl], j[sl]] = _pair_log_marginal(ds, nodes[i[sl]], nodes[j[sl]], m=0, T_cal=ds.T)
    return cost


def pgmdl(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None) -> MethodResult:
    """Pruned global MDL: optimal subset of the scan candidates."""
    t0 = time.perf_counter()
    cfg = (cfg or DetectorConfig()).resolve(ds)
    cands = scan_candidates(ds, cfg)
    nodes = np.array([0] + cands + [ds.T])
    max_b = min(cfg.max_breaks, len(cands))
    cost = _node_costs(ds, nodes, cfg.min_duration)
    k, path, totals = _optimal_partition(cost, max_b)
    breaks = [int(nodes[p]) for p in path[1:-1]]
    diag = {"candidates": cands, "totals_by_m": [_finite_or_none(v) for v in totals]}
    return _finish(ds, cfg, Method.PGMDL, breaks, t0, diag)


def gmdl(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None) -> MethodResult:
    """Exact maximizer of the MDL marginal likelihood over ``m <= max_breaks``.

    Segment costs are calibrated with ``m = 0``; the break-count term
    ``-ln_plus(m)`` is added per candidate ``m`` after partitioning, which is
    exact because that is the only ``m``-dependent part of the calibration.
    """
    t0 = time.perf_counter()
    cfg = (cfg or DetectorConfig()).resolve(ds)
    if ds.T > cfg.gmdl_max_T:
        raise ComputationGuardError(
            f"GMDL needs O(T^2) memory; T={ds.T} exceeds gmdl_max_T={cfg.gmdl_max_T} (use PGMDL)"
        )
    d = cfg.min_duration
    max_b = min(cfg.max_breaks, max(0, ds.T // d - 1))
    cost = _node_costs(ds, np.arange(ds.T + 1), d)
    k, path, totals = _optimal_partition(cost, max_b)
    if not np.isfinite(totals).any():
        raise InvalidSegmentationError("every admissible segmentation is degenerate")
    diag = {"totals_by_m": [_finite_or_none(v) for v in totals]}
    return _finish(ds, cfg, Method.GMDL, path[1:-1], t0, diag)


def _count_segmentations(T: int, d: int, M: int) -> int:
    """Number of segmentations of ``(0, T]`` with at most M breaks and lengths >= d."""
    # ways[t]: ways to cut (0, t] into the current number of segments
    ways = [0] * (T + 1)
    for t in range(d, T + 1):
        ways[t] = 1
    total = ways[T]
    for _ in range(M):
        prefix = list(itertools.accumulate(ways))
        ways = [prefix[t - d] if t - d >= 0 else 0 for t in range(T + 1)]
        total += ways[T]
    return total


def brute_force(ds: TimeSeriesDataset, cfg: DetectorConfig | None = None, max_evaluations: int = 10**7) -> MethodResult:
    """Exhaustive search over all segmentations with ``m <= max_breaks``.

    Segment scores go through the scalar :func:`segment_stats` /
    :func:`calibrate` path (memoized per segment and ``m``), independent of the
    batched code used by the dynamic programs.  Ties keep the first segmentation
    in (m, lexicographic) order.
    """
    t0 = time.perf_counter()
    cfg = (cfg or DetectorConfig()).resolve(ds)
    d, T = cfg.min_duration, ds.T
    M = min(cfg.max_breaks, max(0, T // d - 1))
    count = _count_segmentations(T, d, M)
    if count > max_evaluations:
        raise ComputationGuardError(f"{count} segmentations exceed the guard of {max_evaluations}")
    memo: dict = {}

    def seg_score(a, b, m):
        key = (a, b, m)
        if key not in memo:
            try:
                st = segment_stats(ds, a, b)
                memo[key] = segment_log_marginal(st, calibrate(st, m, T, ds.K))
            except Exception:
                memo[key] = -math.inf
        return memo[key]

    best, best_tau, n_eval = -math.inf, None, 0
    for m in range(M + 1):
        for tau in itertools.combinations(range(d, T - d + 1), m):
            bounds = (0,) + tau + (T,)
            if any(bounds[i + 1] - bounds[i] < d for i in range(m + 1)):
                continue
            n_eval += 1
            val = sum(seg_score(bounds[i], bounds[i + 1], m) for i in range(m + 1))
            if val > best or best_tau is None:
                best, best_tau = val, tau
    return _finish(ds, cfg, Method.ORACLE, list(best_tau), t0, {"evaluated": n_eval})


def detect(ds: TimeSeriesDataset, method, cfg: DetectorConfig | None = None) -> MethodResult:
    """Run one detector by name."""
    method = Method.parse(method)
    if method is Method.BS:
        return binary_segmentation(ds, cfg, "cumsum")
    if method is Method.WBS:
        return wild_binary_segmentation(ds, cfg, "cumsum")
    if method is Method.BSMDL:
        return binary_segmentation(ds, cfg, "bsmdl")
    if method is Method.WBSMDL:
        return wild_binary_segmentation(ds, cfg, "bsmdl")
    if method is Method.PGMDL:
        return pgmdl(ds, cfg)
    if method is Method.GMDL:
        return gmdl(ds, cfg)
    return brute_force(ds, cfg)
