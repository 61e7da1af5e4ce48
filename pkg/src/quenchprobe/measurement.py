"""Monte-Carlo readout of S_x with optional Gaussian resolution, and sample variances.

Random numbers come from numpy's counter-based Philox generator seeded through
``SeedSequence``. Sub-streams are addressed by integer keys (time index, sweep
point) so every sample is reproducible in isolation.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import ModelSpec
from .hilbert import Observable, polarized_state
from .metrology import MetricCurve, OutcomeDistribution, outcome_distribution
from .propagator import EvolutionGrid, KrylovConfig, evolve_krylov


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit sub-seed of ``seed`` addressed by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def point_key(spec: ModelSpec) -> tuple[int, int]:
    """Integer key of a sweep point, taken from the bit patterns of (kappa, B)."""
    return (
        int(np.float64(spec.kappa).view(np.uint64)),
        int(np.float64(spec.b).view(np.uint64)),
    )


@dataclass
class MeasurementRecord:
    outcomes: np.ndarray
    resolution_delta: float
    seed: int
    n_sites: int
    observable: Observable = Observable.SX

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=float)
        if self.resolution_delta < 0:
            raise ValueError("resolution_delta must be >= 0")
        if self.resolution_delta == 0:
            shifted = self.outcomes + self.n_sites / 2
            if np.any(shifted != np.round(shifted)) or np.any(shifted < 0) or np.any(shifted > self.n_sites):
                raise ValueError("projective outcomes must lie on the -N/2..N/2 lattice")

    @property
    def m(self) -> int:
        return self.outcomes.size

    def header(self) -> dict:
        return {
            "seed": self.seed,
            "delta": self.resolution_delta,
            "m": self.m,
            "n_sites": self.n_sites,
            "observable": self.observable.value,
        }

    def to_csv(self, extra_header: dict | None = None) -> str:
        """JSON header line (prefixed ``#``), then one outcome per line."""
        head = self.header()
        if extra_header:
            head.update(extra_header)
        lines = ["# " + json.dumps(head, sort_keys=True), "outcome"]
        lines += [repr(float(x)) for x in self.outcomes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementRecord":
        f = io.StringIO(text)
        head = json.loads(f.readline().lstrip("#").strip())
        if f.readline().strip() != "outcome":
            raise ValueError("missing 'outcome' column header")
        outcomes = [float(line) for line in f if line.strip()]
        if len(outcomes) != head["m"]:
            raise ValueError(f"header says m={head['m']}, found {len(outcomes)} outcomes")
        return cls(
            np.array(outcomes),
            head["delta"],
            head["seed"],
            head["n_sites"],
            Observable(head.get("observable", "Sx")),
        )


def lattice_indices(dist: OutcomeDistribution, m: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw of ``m`` lattice indices (0 is the lowest outcome)."""
    cdf = np.cumsum(dist.probabilities)
    cdf /= cdf[-1]
    u = rng.random(m)
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def sample_outcomes(
    dist: OutcomeDistribution, m: int, delta: float = 0.0, seed: int = 0
) -> MeasurementRecord:
    """Draw ``m`` outcomes; ``delta > 0`` blurs each by Gaussian noise of that width."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    rng = make_rng(seed)
    outcomes = dist.outcomes[lattice_indices(dist, m, rng)]
    if delta > 0:
        outcomes = outcomes + rng.normal(0.0, delta, m)
    return MeasurementRecord(outcomes, float(delta), int(seed), dist.n_sites, dist.observable)


def bessel_variance(record) -> float:
    """Unbiased sample variance with the ``m - 1`` denominator."""
    x = record.outcomes if isinstance(record, MeasurementRecord) else np.asarray(record, float)
    if x.size < 2:
        raise ValueError("need at least two outcomes for a sample variance")
    mean = math.fsum(x) / x.size
    return math.fsum((x - mean) ** 2) / (x.size - 1)


def blurred_moments(dist: OutcomeDistribution, delta: float) -> tuple[float, float]:
    """Second and fourth central moments of the lattice law convolved with N(0, delta^2)."""
    mu2 = dist.variance()
    mu4 = dist.central_moment(4)
    d2 = delta * delta
    return mu2 + d2, mu4 + 6 * mu2 * d2 + 3 * d2 * d2


def bessel_variance_stderr(dist: OutcomeDistribution, m: int, delta: float = 0.0) -> float:
    """Exact standard deviation of the sample variance of ``m`` i.i.d. draws."""
    mu2, mu4 = blurred_moments(dist, delta)
    var = mu4 / m - mu2 * mu2 * (m - 3) / (m * (m - 1))
    return math.sqrt(max(var, 0.0))


def variance_curve(
    spec: ModelSpec,
    grid: EvolutionGrid,
    m: int,
    delta: float = 0.0,
    seed: int = 0,
    cfg: KrylovConfig = KrylovConfig(),
) -> MetricCurve:
    """Sampled S_x variance along the quench.

    ``m == 0`` switches to the exact expected value ``Var(S_x) + delta**2``.
    """
    acc = VarianceAccumulator(spec, m, delta, seed)
    for k, (t, psi) in enumerate(evolve_krylov(spec, polarized_state(spec.basis), grid, cfg)):
        acc.add(k, t, outcome_distribution(psi, Observable.SX))
    return acc.curve()


class VarianceAccumulator:
    """Per-time variance sampling, shared by :func:`variance_curve` and sweeps."""

    def __init__(self, spec: ModelSpec, m: int, delta: float, seed: int):
        if m == 1 or m < 0:
            raise ValueError("m must be 0 (analytic) or >= 2")
        self.m, self.delta, self.seed = m, float(delta), seed
        self.key = point_key(spec)
        self.times: list[float] = []
        self.values: list[float] = []
        self.stderrs: list[float] = []

    def add(self, k: int, t: float, dist: OutcomeDistribution) -> None:
        self.times.append(t)
        if self.m == 0:
            self.values.append(dist.variance() + self.delta**2)
            self.stderrs.append(0.0)
            return
        rec = sample_outcomes(dist, self.m, self.delta, derive_seed(self.seed, k, *self.key))
        self.values.append(bessel_variance(rec))
        self.stderrs.append(bessel_variance_stderr(dist, self.m, self.delta))

    def curve(self) -> MetricCurve:
        name = "variance" if self.m == 0 else f"variance_m{self.m}_delta{self.delta:g}"
        curve = MetricCurve(self.times, self.values, name, stderr=self.stderrs)
        curve.diagnostics = {"average_stderr": curve.average_stderr()}
        return curve
