"""Benchmark data-generating processes and replication studies.

The six piecewise AR(2) processes ``A``-``F`` are stated for ``T = 1024``;
:meth:`DgpSpec.breaks_for` rescales them to other sample sizes.  A
replication study simulates independent series, runs a set of detectors on
each and aggregates detection-count histograms, exact-location frequencies,
break errors, MDL values and runtimes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detect import DetectorConfig, Method, detect
from .mdl import mdl_criterion
from .segstats import Segmentation, build_ar_dataset
from .select import posterior_probabilities

__all__ = ["DgpSpec", "DGPS", "simulate_dgp", "ReplicationReport", "run_replications", "posterior_prob_study"]

logger = logging.getLogger(__name__)

_BURN_IN = 200
_REFERENCE_T = 1024


@dataclass(frozen=True)
class DgpSpec:
    """Piecewise AR(2) process ``y_t = b0 + b1 y_{t-1} + b2 y_{t-2} + e_t``.

    ``breaks`` are absolute dates at ``T = 1024``.  ``relative_breaks``, when
    set, overrides proportional rescaling at other sample sizes.
    """

    id: str
    breaks: tuple[int, ...]
    beta0: tuple[float, ...]
    beta1: tuple[float, ...]
    beta2: tuple[float, ...]
    sigma2: tuple[float, ...]
    ar_order: int
    relative_breaks: tuple[float, ...] | None = None
    burn_in: int = _BURN_IN

    def __post_init__(self):
        r = len(self.breaks) + 1
        for name in ("beta0", "beta1", "beta2", "sigma2"):
            if len(getattr(self, name)) != r:
                raise ValueError(f"DGP {self.id}: {name} needs {r} regime values")
        for b1, b2 in zip(self.beta1, self.beta2):
            roots = np.roots([-b2, -b1, 1.0]) if b2 != 0 else np.array([1.0 / b1]) if b1 != 0 else np.array([np.inf])
            if np.any(np.abs(roots) <= 1.0):
                raise ValueError(f"DGP {self.id}: regime AR({b1}, {b2}) is not stationary")

    @property
    def m(self) -> int:
        return len(self.breaks)

    def breaks_for(self, T: int) -> tuple[int, ...]:
        if T == _REFERENCE_T:
            return self.breaks
        if self.relative_breaks is not None:
            return tuple(int(round(r * T)) for r in self.relative_breaks)
        return tuple(int(round(b * T / _REFERENCE_T)) for b in self.breaks)


DGPS: dict[str, DgpSpec] = {
    "A": DgpSpec("A", (), (0.0,), (-0.7,), (0.0,), (1.0,), ar_order=1),
    "B": DgpSpec(
        "B", (514, 768), (0, 0, 0), (0.9, 1.69, 1.32), (0, -0.81, -0.81), (1, 1, 1),
        ar_order=2, relative_breaks=(0.5, 0.75),
    ),
    "C": DgpSpec("C", (400, 612), (0, 0, 0), (0.4, -0.6, 0.5), (0, 0, 0), (1, 1, 1), ar_order=1),
    "D": DgpSpec("D", (50,), (0, 0), (0.75, -0.5), (0, 0), (1, 1), ar_order=1),
    "E": DgpSpec("E", (400, 750), (0, 0, 0), (0.999, 0.999, 0.999), (0, 0, 0), (1, 2.25, 1), ar_order=1),
    "F": DgpSpec(
        "F", (400, 750), (0, 0, 0), (1.399, 0.999, 0.699), (-0.4, 0, 0.3), (1, 2.25, 1), ar_order=2
    ),
}


def _as_spec(spec) -> DgpSpec:
    return DGPS[spec.upper()] if isinstance(spec, str) else spec


def simulate_dgp(spec, T: int, seed=None, breaks: Sequence[int] | None = None) -> np.ndarray:
    """Simulate ``T`` observations; regime ``i`` covers ``tau_{i-1} < t <= tau_i``.

    The recursion starts from zeros and runs ``burn_in`` steps under regime 1
    before ``t = 1``.  The lag state carries over across breaks.
    """
    spec = _as_spec(spec)
    if T < 100:
        raise ValueError("T must be >= 100")
    taus = tuple(breaks) if breaks is not None else spec.breaks_for(T)
    if len(taus) != spec.m or any(not 0 < t < T for t in taus):
        raise ValueError(f"invalid break dates {taus} for DGP {spec.id} at T={T}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = spec.burn_in + T
    regime = np.zeros(n, dtype=np.int64)
    for t in taus:
        regime[spec.burn_in + t :] += 1
    b0, b1, b2 = (np.asarray(v, dtype=float)[regime] for v in (spec.beta0, spec.beta1, spec.beta2))
    eps = rng.standard_normal(n) * np.sqrt(np.asarray(spec.sigma2, dtype=float)[regime])
    y = np.zeros(n)
    y1 = y2 = 0.0
    for t in range(n):
        yt = b0[t] + b1[t] * y1 + b2[t] * y2 + eps[t]
        y[t] = yt
        y2, y1 = y1, yt
    return y[spec.burn_in :]


@dataclass
class MethodSummary:
    histogram: dict[int, int] = field(default_factory=dict)
    n_correct: int = 0
    n_exact: int = 0
    abs_errors: list = field(default_factory=list)
    mdl_values: list = field(default_factory=list)
    runtimes: list = field(default_factory=list)
    failures: int = 0


@dataclass
class ReplicationReport:
    """Aggregated detector performance over ``n_reps`` simulated series."""

    dgp: str
    T: int
    n_reps: int
    seed: int
    true_breaks: tuple[int, ...]
    methods: dict = field(default_factory=dict)

    def correct_frequency(self, method) -> float:
        return self.methods[Method.parse(method).value]["correct_frequency"]

    def exact_frequency(self, method) -> float:
        return self.methods[Method.parse(method).value]["exact_frequency"]

    def to_dict(self, include_timing: bool = True) -> dict:
        methods = {}
        for k, v in self.methods.items():
            v = dict(v)
            if not include_timing:
                v["mean_runtime_ms"] = None
            methods[k] = v
        return {
            "dgp": self.dgp,
            "T": self.T,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "true_breaks": list(self.true_breaks),
            "methods": methods,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicationReport":
        methods = {}
        for k, v in d["methods"].items():
            v = dict(v)
            v["histogram"] = {int(m): c for m, c in v["histogram"].items()}
            methods[k] = v
        return cls(d["dgp"], d["T"], d["n_reps"], d["seed"], tuple(d["true_breaks"]), methods)


def _replication_seed(base_seed: int, r: int, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed) & (2**63 - 1), int(r), *extra])


def _one_replication(spec: DgpSpec, methods, T, base_seed, r, cfg, exact_tol):
    y = simulate_dgp(spec, T, np.random.default_rng(_replication_seed(base_seed, r)))
    ds = build_ar_dataset(y, spec.ar_order)
    truth = spec.breaks_for(T)
    out = {}
    for meth in methods:
        code = list(Method).index(meth)
        seed = int(_replication_seed(base_seed, r, code).generate_state(1, np.uint64)[0] >> 1)
        rcfg = DetectorConfig(**{**cfg.to_dict(), "rng_seed": seed})
        try:
            res = detect(ds, meth, rcfg)
            est = tuple(t + ds.time_offset for t in res.breaks)
            mdl = mdl_criterion(ds, res.segmentation, rcfg.resolve(ds).min_duration).value
            out[meth.value] = {"breaks": est, "mdl": mdl, "runtime_ms": res.runtime_ms, "ok": True}
        except Exception as exc:  # counted as incorrect, never aborts the study
            logger.warning("replication %d, %s failed: %s", r, meth.value, exc)
            out[meth.value] = {"breaks": None, "ok": False}
    return truth, out


def run_replications(
    spec,
    methods,
    n_reps: int,
    T: int = 1024,
    base_seed: int = 0,
    cfg: DetectorConfig | None = None,
    exact_tol: int = 50,
    n_jobs: int = 1,
) -> ReplicationReport:
    """Simulate ``n_reps`` series and score each detector on them.

    A replication is *correct* when the detected break count equals the true
    one and *exact* when, in addition, every break is within ``exact_tol`` of
    its true date.  Series ``r`` uses seed ``(base_seed, r)``, so the study is
    reproducible and independent of ``n_jobs`` and of the method list.
    """
    spec = _as_spec(spec)
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    methods = [Method.parse(m) for m in methods]
    cfg = cfg or DetectorConfig()
    args = [(spec, methods, T, base_seed, r, cfg, exact_tol) for r in range(n_reps)]
    if n_jobs != 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(delayed(_one_replication)(*a) for a in args)
    else:
        outcomes = [_one_replication(*a) for a in args]

    truth = spec.breaks_for(T)
    m0 = len(truth)
    summaries = {m.value: MethodSummary() for m in methods}
    for _, out in outcomes:
        for name, res in out.items():
            s = summaries[name]
            if not res["ok"]:
                s.failures += 1
                s.histogram[-1] = s.histogram.get(-1, 0) + 1
                continue
            est = res["breaks"]
            s.histogram[len(est)] = s.histogram.get(len(est), 0) + 1
            s.mdl_values.append(res["mdl"])
            s.runtimes.append(res["runtime_ms"])
            if len(est) == m0:
                s.n_correct += 1
                err = [abs(a - b) for a, b in zip(est, truth)]
                s.abs_errors.append(err)
                if all(e <= exact_tol for e in err):
                    s.n_exact += 1

    report = ReplicationReport(spec.id, T, n_reps, int(base_seed), tuple(truth))
    for name, s in summaries.items():
        report.methods[name] = {
            "histogram": dict(sorted(s.histogram.items())),
            "correct_frequency": s.n_correct / n_reps,
            "exact_frequency": s.n_exact / n_reps,
            "mean_abs_break_errors": np.mean(s.abs_errors, axis=0).tolist() if s.abs_errors else [],
            "mean_mdl": float(np.mean(s.mdl_values)) if s.mdl_values else None,
            "mean_runtime_ms": float(np.mean(s.runtimes)) if s.runtimes else None,
            "failures": s.failures,
        }
    return report


def posterior_prob_study(
    spec, methods, n_reps: int, T: int = 1024, seed: int = 0, cfg: DetectorConfig | None = None, threshold: float = 0.1
) -> dict:
    """Average model posterior probability of each detector's segmentation.

    ``mix`` is the percentage of replications in which at least two methods
    have posterior probability above ``threshold``.
    """
    spec = _as_spec(spec)
    methods = [Method.parse(m) for m in methods]
    if len(methods) < 2:
        raise ValueError("posterior probability study needs at least two methods")
    cfg = cfg or DetectorConfig()
    post_sum = np.zeros(len(methods))
    n_mix = 0
    for r in range(n_reps):
        y = simulate_dgp(spec, T, np.random.default_rng(_replication_seed(seed, r)))
        ds = build_ar_dataset(y, spec.ar_order)
        logml = []
        for meth in methods:
            code = list(Method).index(meth)
            s = int(_replication_seed(seed, r, code).generate_state(1, np.uint64)[0] >> 1)
            res = detect(ds, meth, DetectorConfig(**{**cfg.to_dict(), "rng_seed": s}))
            logml.append(res.score.value)
        post = posterior_probabilities(logml)
        post_sum += post
        n_mix += int(np.sum(post > threshold) >= 2)
    avg = post_sum / n_reps
    return {
        "dgp": spec.id,
        "T": T,
        "n_reps": n_reps,
        "average_posterior": {m.value: float(p) for m, p in zip(methods, avg)},
        "mix": 100.0 * n_mix / n_reps,
    }
