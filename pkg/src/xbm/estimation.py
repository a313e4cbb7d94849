"""Operator-selecting models, exact and sampled estimators, variance bounds, shadows."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import GroupKey, Part
from .grouping import (
    GroupingResult,
    MeasurementGroup,
    build_measurement_circuit,
    embed_offdiagonal,
    group_terms,
    outcome_pair,
)
from .matrix import MatrixStats, SparseObservable, matrix_stats
from .simulator import Statevector, apply_circuit, prepare_bipartite, probabilities, sample_indices

AGGREGATORS = ("mean", "median-of-means")
ALLOCATIONS = ("sampled", "proportional")
MOM_DELTA = 0.05


def mom_batches(delta: float = MOM_DELTA) -> int:
    return math.ceil(2 * math.log(1 / delta))


def resolve_threads(threads: Optional[int] = None) -> int:
    """Thread count: explicit value, else XBM_THREADS, else 1. Zero means all cores."""
    if threads is None:
        threads = int(os.environ.get("XBM_THREADS", "1") or 1)
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


@dataclass(frozen=True)
class SelectingModel:
    kind: str
    weights: dict
    Z: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "weighted", "custom"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        total = sum(self.weights.values())
        if self.weights and abs(total - 1.0) > 1e-12:
            raise ValueError(f"model weights sum to {total}, not 1")
        if any(p < 0 for p in self.weights.values()):
            raise ValueError("negative selection probability")

    def p(self, key: GroupKey) -> float:
        return self.weights.get(key, 0.0)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "Z": self.Z,
            "weights": [{"l": k.l, "s": k.s.value, "p": p} for k, p in self.weights.items()],
        }


def model_uniform(groups: GroupingResult) -> SelectingModel:
    if groups.m == 0:
        raise ValueError("cannot build a model over an empty grouping")
    return SelectingModel("uniform", {g.key: 1.0 / groups.m for g in groups})


def model_weighted(groups: GroupingResult) -> SelectingModel:
    """p(l, s) proportional to the largest |alpha| in the group's table."""
    maxima = {g.key: g.outcomes.max_abs() for g in groups}
    Z = math.fsum(maxima.values())
    if Z == 0:
        raise ValueError("all group weights are zero")
    weights = {k: v / Z for k, v in maxima.items() if v > 0}
    # renormalise to absorb float drift from the division
    total = math.fsum(weights.values())
    return SelectingModel("weighted", {k: v / total for k, v in weights.items()}, Z=Z)


def model_custom(weights: dict) -> SelectingModel:
    total = math.fsum(weights.values())
    return SelectingModel("custom", {k: v / total for k, v in weights.items()})


def resolve_model(groups: GroupingResult, model: Union[str, SelectingModel]) -> SelectingModel:
    if isinstance(model, SelectingModel):
        return model
    if model == "uniform":
        return model_uniform(groups)
    if model == "weighted":
        return model_weighted(groups)
    raise ValueError(f"unknown model {model!r}")


def _check_dims(groups: GroupingResult, phi: Statevector) -> None:
    if groups.n != phi.n:
        raise ValueError(f"dimension mismatch: observable on {groups.n} qubits, state on {phi.n}")


def group_probabilities(group: MeasurementGroup, phi: Statevector) -> np.ndarray:
    """Exact outcome distribution |<b|M|phi>|^2 for one group."""
    return probabilities(apply_circuit(phi, group.circuit))


def group_partials(groups: GroupingResult, phi: Statevector) -> list[complex]:
    """Per group: sum_b alpha(b) P(b)."""
    _check_dims(groups, phi)
    out = []
    for g in groups:
        probs = group_probabilities(g, phi)
        out.append(complex(np.dot(g.outcomes.values, probs[g.outcomes.labels])))
    return out


def estimate_exact(groups: GroupingResult, phi: Statevector) -> complex:
    """Shot-free estimate from exact outcome probabilities."""
    partials = group_partials(groups, phi)
    return complex(math.fsum(z.real for z in partials), math.fsum(z.imag for z in partials))


@dataclass(frozen=True)
class Moments:
    mean: complex
    second: float

    @property
    def variance(self) -> float:
        return max(self.second - abs(self.mean) ** 2, 0.0)


def exact_moments(groups: GroupingResult, model: SelectingModel, phi: Statevector) -> Moments:
    """Mean and E|x|^2 of the single-shot outcome x = alpha / p(l,s) under ``model``."""
    _check_dims(groups, phi)
    mean = 0j
    second = 0.0
    for g in groups:
        p = model.p(g.key)
        probs = group_probabilities(g, phi)[g.outcomes.labels]
        a = g.outcomes.values
        if p == 0:
            if np.any(probs * np.abs(a) > 0):
                raise ValueError(f"group {g.key} has zero selection probability")
            continue
        mean += complex(np.dot(a, probs))
        second += float(np.dot(np.abs(a) ** 2, probs)) / p
    return Moments(mean, second)


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class GroupTally:
    key: Optional[GroupKey]
    shots: int
    partial: complex


@dataclass(frozen=True)
class EstimationReport:
    estimate: complex
    shots_total: int
    per_group: tuple
    empirical_variance: float
    bound_uniform: float
    bound_weighted: float
    bound_shadow: float
    bound_shadow_proxy: bool
    aggregator: str
    mode: str
    model: str
    n_circuits: int
    config: dict = field(default_factory=dict)

    @property
    def stderr(self) -> float:
        if self.shots_total == 0:
            return 0.0
        return math.sqrt(self.empirical_variance / self.shots_total)

    def to_json(self) -> dict:
        return {
            "estimate": [self.estimate.real, self.estimate.imag],
            "shots_total": self.shots_total,
            "per_group": [
                {"l": t.key.l if t.key else None, "s": t.key.s.value if t.key else None, "shots": t.shots,
                 "partial": [t.partial.real, t.partial.imag]}
                for t in self.per_group
            ],
            "empirical_variance": self.empirical_variance,
            "stderr": self.stderr,
            "bound_uniform": self.bound_uniform,
            "bound_weighted": self.bound_weighted,
            "bound_shadow": self.bound_shadow,
            "bound_shadow_proxy": self.bound_shadow_proxy,
            "aggregator": self.aggregator,
            "mode": self.mode,
            "model": self.model,
            "n_circuits": self.n_circuits,
            "config": self.config,
        }

    CSV_FIELDS = ("estimate_re", "estimate_im", "shots_total", "empirical_variance", "stderr",
                  "bound_uniform", "bound_weighted", "bound_shadow", "aggregator", "mode",
                  "model", "n_circuits")

    def csv_row(self) -> dict:
        d = {**self.to_json(), "estimate_re": self.estimate.real, "estimate_im": self.estimate.imag}
        return {k: d[k] for k in self.CSV_FIELDS}


def variance_bounds(groups: GroupingResult, stats: MatrixStats) -> tuple[float, float, float]:
    """(uniform, weighted, shadow) single-shot variance bounds.

    The shadow bound uses tr(A^dagger A), which is tr(A^2) for Hermitian A
    and only a proxy otherwise.
    """
    if groups.m == 0:
        return 0.0, 0.0, 0.0
    maxima = [g.outcomes.max_abs() for g in groups]
    uniform = groups.m ** 2 * max(maxima) ** 2
    weighted = math.fsum(maxima) ** 2
    shadow = math.sqrt(9 + 6 / 2 ** groups.n) * stats.trace_sq
    return uniform, weighted, shadow


def _empty_report(mode: str, aggregator: str, model: str, config: dict) -> EstimationReport:
    return EstimationReport(0j, 0, (), 0.0, 0.0, 0.0, 0.0, False, aggregator, mode, model, 0, config)


def _group_seed(seed: int, key: GroupKey) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, key.l, 0 if key.s is Part.RE else 1])


def _draw_group(group: MeasurementGroup, phi: Statevector, shots: int, seed: int) -> np.ndarray:
    """alpha values for ``shots`` measurements of one group."""
    if shots == 0:
        return np.zeros(0, dtype=np.complex128)
    rng = np.random.default_rng(_group_seed(seed, group.key))
    draws = sample_indices(group_probabilities(group, phi), shots, rng)
    return group.outcomes.lookup(draws)


def _median_complex(z: np.ndarray) -> complex:
    return complex(np.median(z.real), np.median(z.imag))


def _single_var(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    return float(np.mean(np.abs(x - x.mean()) ** 2))


def estimate_sampled(
    groups: GroupingResult,
    model: Union[str, SelectingModel],
    phi: Statevector,
    shots: int,
    seed: int = 0,
    aggregator: str = "mean",
    allocation: str = "sampled",
    threads: Optional[int] = None,
    stats: Optional[MatrixStats] = None,
    batches: Optional[int] = None,
    config: Optional[dict] = None,
) -> EstimationReport:
    """Shot-based estimate.

    ``allocation="sampled"`` picks a group per shot from the model and
    records x = alpha/p. ``allocation="proportional"`` gives each group
    round(shots * p) shots and sums the per-group sample means of alpha;
    its reported variance is the equivalent single-shot variance
    shots_total * sum_g var_g / n_g.
    """
    if aggregator not in AGGREGATORS:
        raise ValueError(f"unknown aggregator {aggregator!r}")
    if allocation not in ALLOCATIONS:
        raise ValueError(f"unknown allocation {allocation!r}")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    _check_dims(groups, phi)
    config = dict(config or {})
    if groups.m == 0:
        return _empty_report("sampled", aggregator, getattr(model, "kind", str(model)), config)
    model = resolve_model(groups, model)
    active = [g for g in groups if model.p(g.key) > 0]
    probs = np.array([model.p(g.key) for g in active])
    K = batches or mom_batches()

    if allocation == "sampled":
        counts = np.random.default_rng(seed).multinomial(shots, probs / probs.sum())
    else:
        counts = np.rint(shots * probs).astype(np.int64)
        if shots < len(active) or counts.min() < 1:
            raise ValueError(f"proportional allocation needs at least one shot per group ({len(active)} groups)")
        if aggregator == "median-of-means" and counts.min() < K:
            raise ValueError(f"median-of-means needs at least {K} shots per group")

    nthreads = min(resolve_threads(threads), len(active))
    jobs = list(zip(active, counts.tolist()))
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            alphas = list(pool.map(lambda job: _draw_group(job[0], phi, job[1], seed), jobs))
    else:
        alphas = [_draw_group(g, phi, c, seed) for g, c in jobs]

    shots_total = int(counts.sum())
    tallies = []
    if allocation == "sampled":
        xs = [a / p for a, p in zip(alphas, probs)]
        for (g, c), x in zip(jobs, xs):
            tallies.append(GroupTally(g.key, c, complex(x.sum() / shots_total)))
        x_all = np.concatenate(xs)
        variance = _single_var(x_all)
        if aggregator == "mean":
            estimate = complex(x_all.mean())
        else:
            order = np.random.default_rng(np.random.SeedSequence([seed, 1 << 62])).permutation(x_all.size)
            estimate = _median_complex(np.array([b.mean() for b in np.array_split(x_all[order], K)]))
    else:
        means = [complex(a.mean()) for a in alphas]
        for (g, c), mu in zip(jobs, means):
            tallies.append(GroupTally(g.key, c, mu))
        variance = shots_total * math.fsum(_single_var(a) / a.size for a in alphas)
        if aggregator == "mean":
            estimate = complex(sum(means))
        else:
            per_batch = sum(np.array([b.mean() for b in np.array_split(a, K)]) for a in alphas)
            estimate = _median_complex(np.asarray(per_batch))

    stats = stats or _stats_from_groups(groups)
    bu, bw, bs = variance_bounds(groups, stats) if stats is not None else (0.0, 0.0, 0.0)
    return EstimationReport(
        estimate, shots_total, tuple(tallies), variance, bu, bw, bs,
        not (stats.is_hermitian if stats else True), aggregator, f"sampled/{allocation}",
        model.kind, len(active), config,
    )


def _stats_from_groups(groups: GroupingResult) -> Optional[MatrixStats]:
    # bounds other than the shadow one only need the grouping; rebuild A for the rest
    return matrix_stats(reconstruct_observable(groups))


def reconstruct_observable(groups: GroupingResult) -> SparseObservable:
    """Recover A from its outcome tables (inverse of the grouping map)."""
    rows, cols, vals = [], [], []
    for g in groups:
        for b, a in g.outcomes.items():
            if g.key.l == 0:
                rows.append(b)
                cols.append(b)
                vals.append(a)
                continue
            bp, cp, w = outcome_pair(g.key.l, b)
            if w:
                continue
            # alpha_Re = (A_bc + A_cb)/2, alpha_Im = i(A_bc - A_cb)/2 at the w = 0 label
            rows += [bp, cp]
            cols += [cp, bp]
            vals += [a, a] if g.key.s is Part.RE else [-1j * a, 1j * a]
    return SparseObservable(groups.n, rows, cols, vals)


def _exact_report(groups: GroupingResult, phi: Statevector, model, stats, mode: str, config: dict) -> EstimationReport:
    if groups.m == 0:
        return _empty_report(mode, "exact", getattr(model, "kind", str(model)), config)
    model = resolve_model(groups, model)
    partials = group_partials(groups, phi)
    estimate = complex(math.fsum(z.real for z in partials), math.fsum(z.imag for z in partials))
    variance = exact_moments(groups, model, phi).variance
    stats = stats or _stats_from_groups(groups)
    bu, bw, bs = variance_bounds(groups, stats)
    tallies = tuple(GroupTally(g.key, 0, z) for g, z in zip(groups, partials))
    return EstimationReport(estimate, 0, tallies, variance, bu, bw, bs, not stats.is_hermitian,
                            "exact", mode, model.kind, groups.m, config)


def estimate(
    groups: GroupingResult,
    phi: Statevector,
    *,
    exact: bool = False,
    model: Union[str, SelectingModel] = "uniform",
    stats: Optional[MatrixStats] = None,
    config: Optional[dict] = None,
    **knobs,
) -> EstimationReport:
    """Exact or sampled report for a grouping; ``knobs`` go to ``estimate_sampled``."""
    if exact:
        return _exact_report(groups, phi, model, stats, "exact", dict(config or {}))
    return estimate_sampled(groups, model, phi, stats=stats, config=config, **knobs)


def estimate_two_state(a_prime: SparseObservable, psi0: Statevector, psi1: Statevector, **kw) -> EstimationReport:
    """<psi0|A'|psi1> via the off-diagonal embedding on one extra qubit."""
    if psi0.n != psi1.n or a_prime.n != psi0.n:
        raise ValueError("dimension mismatch between observable and states")
    big = embed_offdiagonal(a_prime)
    report = estimate(group_terms(big), prepare_bipartite(psi0, psi1), stats=matrix_stats(big), **kw)
    mode = "two-state/" + report.mode
    return EstimationReport(**{**report.__dict__, "mode": mode})


def estimate_half(groups: GroupingResult, phi: Statevector, **kw) -> EstimationReport:
    """Estimate with the Re groups only.

    Valid when the wanted quantity is Re<phi|A|phi> with a real state, or when
    both A and the state are real up to a global phase. Not checked here.
    """
    report = estimate(groups.real_part(), phi, **kw)
    return EstimationReport(**{**report.__dict__, "mode": "half/" + report.mode})


# ---------------------------------------------------------------------------
# Classical shadow


@dataclass(frozen=True)
class ShadowSnapshot:
    key: GroupKey
    bitstring: int


def shadow_snapshot_value(snap: ShadowSnapshot, groups: GroupingResult, model: SelectingModel) -> complex:
    """a(l,s,b) = alpha(l,s,b) / p(l,s)."""
    g = groups.get(snap.key)
    if g is None:
        raise KeyError(f"no group with key {snap.key}")
    p = model.p(snap.key)
    if p <= 0:
        raise ValueError(f"group {snap.key} has zero selection probability")
    return g.outcomes.get(snap.bitstring, 0j) / p


def shadow_matrix(n: int, key: GroupKey, b: int, p: float) -> np.ndarray:
    """Dense snapshot operator rho_hat(l, s, b) for a group selected with probability p."""
    dim = 1 << n
    rho = np.zeros((dim, dim), dtype=np.complex128)
    if key.l == 0:
        rho[b, b] = 1.0 / p
        return rho
    bp, cp, w = outcome_pair(key.l, b)
    sign = -1.0 if w else 1.0
    if key.s is Part.RE:
        rho[cp, bp] = rho[bp, cp] = sign / (2 * p)
    else:
        rho[cp, bp] = 1j * sign / (2 * p)
        rho[bp, cp] = -1j * sign / (2 * p)
    return rho


def shadow_density(n: int, model: SelectingModel, phi: Statevector) -> np.ndarray:
    """sum over (l,s,b) of p(l,s) P(b|l,s) rho_hat(l,s,b).

    Reproduces |phi><phi| when the model covers every key of 2^{n+1} - 1.
    """
    total = np.zeros((1 << n, 1 << n), dtype=np.complex128)
    for key, p in model.weights.items():
        if p == 0:
            continue
        probs = probabilities(apply_circuit(phi, build_measurement_circuit(key.l, key.s, n)))
        for b in np.flatnonzero(probs):
            total += p * probs[b] * shadow_matrix(n, key, int(b), p)
    return total
