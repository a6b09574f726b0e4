"""Deterministic Gaussian sampling and the standard-normal quantile.

Every Monte Carlo run and every noise source draws from its own
counter-based stream keyed by (seed, stream_id), so paired comparisons
across controller formulations consume identical realizations and
results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, OutOfDomain

# stream_id layout: run_index * 8 + source
SOURCE_INIT_ESTIMATE = 0
SOURCE_STATE_NOISE = 1
SOURCE_OUTPUT_NOISE = 2
_SOURCES_PER_RUN = 8

_MASK64 = (1 << 64) - 1


@dataclass
class RngStream:
    """A deterministic sample stream; (seed, stream_id) fixes the sequence.

    Streams are value-like: constructing the same (seed, stream_id) twice
    reproduces the identical sequence bit for bit. Streams are handed out
    by :func:`make_stream`; cloning one and advancing both copies is not
    supported.
    """

    seed: int
    stream_id: int
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def _generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array(
                [self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
            )
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def standard_normals(self, n: int) -> np.ndarray:
        """Draw n i.i.d. standard normals and advance the stream."""
        return self._generator().standard_normal(n)

    def fingerprint(self) -> tuple[int, int]:
        """Identity of the sequence this stream produces."""
        return (self.seed & _MASK64, self.stream_id & _MASK64)


def make_stream(seed: int, run_index: int, source: int) -> RngStream:
    """Stream factory keyed on (run, source); sources are the module constants."""
    if not 0 <= source < _SOURCES_PER_RUN:
        raise OutOfDomain(f"source must be in [0, {_SOURCES_PER_RUN}), got {source}")
    return RngStream(seed=seed, stream_id=run_index * _SOURCES_PER_RUN + source)


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector plus upper-triangular square root of the covariance."""

    mean: np.ndarray
    covariance_factor: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        fac = np.asarray(self.covariance_factor, dtype=float)
        if fac.ndim != 2 or fac.shape[0] != fac.shape[1] or fac.shape[0] != mean.size:
            raise DimensionMismatch(
                f"covariance factor shape {fac.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance_factor", fac)


def sample_gaussian(stream: RngStream, spec: GaussianSpec) -> np.ndarray:
    """One draw: mean + factor.T @ z with z i.i.d. standard normal."""
    z = stream.standard_normals(spec.mean.size)
    return spec.mean + spec.covariance_factor.T @ z


# Rational approximation of the standard-normal quantile (Acklam's
# coefficients), refined below by one Newton step on Phi.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425


def normal_cdf(z: float) -> float:
    """Standard-normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _rational_quantile(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (
        (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5])
        * q
        / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    )


def inverse_normal_cdf(p: float) -> float:
    """Quantile z with Phi(z) = p, accurate to |Phi(z) - p| <= 1e-12.

    A rational approximation supplies the starting point; one Newton step
    on Phi removes its residual error.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise OutOfDomain(f"p must lie strictly between 0 and 1, got {p!r}")
    z = _rational_quantile(p)
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if pdf > 0.0:
        z -= (normal_cdf(z) - p) / pdf
    return z
