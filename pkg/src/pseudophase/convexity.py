"""Sampling lab for gamma-hyperconvexity certificates.

A functional F on a normed space is gamma-hyperconvex with modulus c > 0
when for all points x, y and weights theta in (0,1)

    theta*F(x) + (1-theta)*F(y) - F(theta*x + (1-theta)*y)
        >= c * min(theta, 1-theta) * ||x - y||**gamma.

The lab falsifies by sampling: it cannot prove the inequality, only fail
to break it over many random triples, so every certificate it emits is
evidence rather than proof.  Strict positivity of c is enforced at the API
boundary; c = 0 is plain convexity and deliberately not accepted.

Two estimate conventions coexist on purpose.  run_trial reports pass/fail
with a round-off allowance (tol_trial), so exact boundary cases read as
passes.  The bisection inside estimate_modulus scores trials with no
allowance at all, so the certified modulus never overstates what the
samples support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .grid import Grid, GridFunction, sobolev_norm

__all__ = [
    "HyperconvexityTrial",
    "ConvexityCertificate",
    "SampledSpace",
    "SamplerConfig",
    "real_line_space",
    "grid_function_space",
    "run_trial",
    "estimate_modulus",
    "check_sum_lemma",
    "certificate_record",
]

#: Relative round-off allowance for the pass/fail verdict of a single trial.
TRIAL_TOL_REL = 1e-10

#: Interpolation weights probed deterministically before the random draws.
_THETA_PROBES = (0.5, 0.01, 0.99)

_BISECTION_ITERS = 40


@dataclass(frozen=True)
class HyperconvexityTrial:
    """One evaluated instance of the hyperconvexity inequality."""

    x: Any
    y: Any
    theta: float
    gamma: float
    c: float
    defect: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class ConvexityCertificate:
    """Aggregate verdict over a batch of sampled trials."""

    trials: int
    failures: int
    c_estimate: float
    seed: int
    gamma: float
    worst_defect: float

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.c_estimate > 0.0


@dataclass(frozen=True)
class SampledSpace:
    """Point sampler plus the declared norm of the tested space."""

    sample: Callable[[np.random.Generator], Any]
    norm: Callable[[Any], float]


@dataclass(frozen=True)
class SamplerConfig:
    """Deterministic sampling plan: seed, trial count, and the space."""

    seed: int
    trials: int
    space: SampledSpace

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trial count must be >= 1, got {self.trials}")


def real_line_space(scale: float = 1.0) -> SampledSpace:
    """Scalar points drawn from N(0, scale**2); norm is |.|."""
    if scale <= 0.0:
        raise ValueError("scale must be positive")

    def sample(rng: np.random.Generator) -> float:
        return float(rng.normal(0.0, scale))

    return SampledSpace(sample=sample, norm=abs)


def grid_function_space(
    grid: Grid, p: float, norm_low: float = 0.1, norm_high: float = 10.0
) -> SampledSpace:
    """Gaussian nodal vectors rescaled so sobolev_norm(., p) lands in a band.

    The target norm is log-uniform in [norm_low, norm_high], which exercises
    both the small-gradient and the large-gradient regime of the two phases.
    """
    if not 0.0 < norm_low < norm_high:
        raise ValueError("need 0 < norm_low < norm_high")

    def sample(rng: np.random.Generator) -> GridFunction:
        values = rng.standard_normal(grid.shape)
        u = GridFunction(grid, values)
        base = sobolev_norm(u, p)
        while base == 0.0:  # pragma: no cover - measure-zero draw
            values = rng.standard_normal(grid.shape)
            u = GridFunction(grid, values)
            base = sobolev_norm(u, p)
        target = float(np.exp(rng.uniform(np.log(norm_low), np.log(norm_high))))
        return u * (target / base)

    return SampledSpace(sample=sample, norm=lambda u: sobolev_norm(u, p))


def _default_norm(point: Any) -> float:
    if isinstance(point, (int, float, np.floating)):
        return abs(float(point))
    raise TypeError(
        "pass the space's norm explicitly for non-scalar points "
        "(e.g. norm=lambda d: sobolev_norm(d, p))"
    )


def _combine(theta: float, x: Any, y: Any) -> Any:
    return theta * x + (1.0 - theta) * y


def _trial_parts(
    F: Callable[[Any], float],
    x: Any,
    y: Any,
    theta: float,
    gamma: float,
    norm: Callable[[Any], float],
) -> tuple[float, float, float]:
    """Convexity gap, penalty basis, and magnitude scale for one triple."""
    fx = float(F(x))
    fy = float(F(y))
    fc = float(F(_combine(theta, x, y)))
    gap = theta * fx + (1.0 - theta) * fy - fc
    basis = min(theta, 1.0 - theta) * norm(x - y) ** gamma
    scale = abs(fx) + abs(fy) + abs(fc)
    return gap, basis, scale


def run_trial(
    F: Callable[[Any], float],
    x: Any,
    y: Any,
    theta: float,
    gamma: float,
    c: float,
    norm: Callable[[Any], float] | None = None,
) -> HyperconvexityTrial:
    """Evaluate the hyperconvexity defect for one (x, y, theta) triple.

    The defect is the inequality's left side minus its right side; the trial
    passes when defect >= -tol with tol = 1e-10 times the magnitude of the
    three functional values, so exact boundary cases are not lost to
    round-off.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {theta}")
    if not c > 0.0:
        raise ValueError(f"the modulus must be strictly positive, got c={c}")
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if norm is None:
        norm = _default_norm
    gap, basis, scale = _trial_parts(F, x, y, theta, gamma, norm)
    defect = gap - c * basis
    tol = TRIAL_TOL_REL * scale
    return HyperconvexityTrial(
        x=x,
        y=y,
        theta=theta,
        gamma=gamma,
        c=c,
        defect=defect,
        tol=tol,
        passed=bool(defect >= -tol),
    )


def _trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, schedule-free stream for trial `index`."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    )


def _sample_triples(
    config: SamplerConfig, gamma: float, F: Callable[[Any], float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaps, penalty bases, and scales over the configured trial batch."""
    space = config.space
    gaps = np.empty(config.trials)
    bases = np.empty(config.trials)
    scales = np.empty(config.trials)
    for i in range(config.trials):
        rng = _trial_rng(config.seed, i)
        theta = (
            _THETA_PROBES[i]
            if i < len(_THETA_PROBES)
            else float(rng.uniform(1e-3, 1.0 - 1e-3))
        )
        x = space.sample(rng)
        y = space.sample(rng)
        attempts = 0
        while space.norm(x - y) == 0.0:
            y = space.sample(rng)
            attempts += 1
            if attempts > 100:  # pragma: no cover - degenerate sampler
                raise RuntimeError("sampler keeps producing coincident points")
        gaps[i], bases[i], scales[i] = _trial_parts(F, x, y, theta, gamma, space.norm)
    return gaps, bases, scales


def estimate_modulus(
    F: Callable[[Any], float], gamma: float, config: SamplerConfig
) -> ConvexityCertificate:
    """Estimate the largest modulus the sampled trials support.

    Bisection on c over [0, c_hi] with c_hi ten times the largest observed
    convexity-gap ratio; a candidate passes only if every sampled defect is
    >= 0 with no round-off allowance, so the estimate errs low.  failures
    counts trials whose plain convexity gap is negative, i.e. trials no
    positive modulus can satisfy; any such trial pins c_estimate at 0.
    """
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    gaps, bases, _ = _sample_triples(config, gamma, F)
    failures = int(np.count_nonzero(gaps < 0.0))
    ratios = gaps / bases
    c_hi = 10.0 * float(ratios.max(initial=0.0))
    lo = 0.0
    if c_hi > 0.0 and np.all(gaps >= 0.0):
        hi = c_hi
        for _ in range(_BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            if np.all(gaps - mid * bases >= 0.0):
                lo = mid
            else:
                hi = mid
    worst = float(np.min(gaps - lo * bases))
    return ConvexityCertificate(
        trials=config.trials,
        failures=failures,
        c_estimate=lo,
        seed=config.seed,
        gamma=gamma,
        worst_defect=worst,
    )


def check_sum_lemma(
    h_cert: ConvexityCertificate,
    g_cert: ConvexityCertificate,
    F_sum: Callable[[Any], float],
    config: SamplerConfig,
) -> ConvexityCertificate:
    """Certify that h + g inherits h's hyperconvexity exponent and modulus.

    Given a passing certificate for h at gamma = p and one for g at
    gamma = q < p with strictly positive modulus, the sum must pass
    p-hyperconvexity trials with h's modulus unchanged: the q-growth term
    only adds a nonnegative amount to every defect.  Run with the same
    sampler config that produced h's certificate so the trials line up.
    """
    if not h_cert.passed:
        raise ValueError("h's certificate must pass before the sum can be checked")
    if not (g_cert.passed and g_cert.c_estimate > 0.0):
        raise ValueError(
            "g's certificate must pass with a strictly positive modulus; "
            "a zero modulus is plain convexity and proves nothing here"
        )
    if not g_cert.gamma < h_cert.gamma:
        raise ValueError(
            f"need g's exponent below h's, got gamma_g={g_cert.gamma} "
            f">= gamma_h={h_cert.gamma}"
        )
    c = h_cert.c_estimate
    gaps, bases, scales = _sample_triples(config, h_cert.gamma, F_sum)
    defects = gaps - c * bases
    tols = TRIAL_TOL_REL * scales
    failing = int(np.count_nonzero(defects < -tols))
    return ConvexityCertificate(
        trials=config.trials,
        failures=failing,
        c_estimate=c if failing == 0 else 0.0,
        seed=config.seed,
        gamma=h_cert.gamma,
        worst_defect=float(defects.min()),
    )


def certificate_record(cert: ConvexityCertificate) -> str:
    """Structured text record of a certificate, one field per line."""
    lines = [
        f"seed = {cert.seed}",
        f"N = {cert.trials}",
        f"gamma = {cert.gamma:.17g}",
        f"c_estimate = {cert.c_estimate:.17g}",
        f"failures = {cert.failures}",
        f"worst_defect = {cert.worst_defect:.17g}",
    ]
    return "\n".join(lines) + "\n"
