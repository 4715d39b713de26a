"""Probability lattices for sources, channel noise, and channel outputs.

Every expectation in the package is evaluated as a weighted sum over fixed
uniform grids: source values carry bivariate-normal masses, noise values
carry univariate-normal masses, and channel outputs get a plain uniform
lattice sized to the reachable range of encoder-output-plus-noise.  One
regular lattice per quantity keeps decoder tabulation, pointwise encoder
search, and all cost quadratures on the same support.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Marginal masses below this are never used as divisors; the row is flagged
# instead.  Far-off-diagonal joint masses underflow at high correlation.
UNDERFLOW_FLOOR = 1e-300

# Narrow total output ranges are widened to this before gridding.
MIN_GRID_WIDTH = 1e-3

DEFAULT_SOURCE_SPAN = 5.0
DEFAULT_NOISE_SPAN = 4.0
DEFAULT_N_X = 64
DEFAULT_N_N = 9
DEFAULT_N_Y = 96


@dataclass(frozen=True)
class SourceModel:
    """Discretized bivariate Gaussian source pair.

    ``q_joint[i, j]`` is the probability mass at ``(x_grid_1[i], x_grid_2[j])``;
    marginals are its row/column sums.  Conditional tables are indexed with
    the conditioning variable on the rows: ``q_cond_2_given_1[i, j]`` is
    P(x2_j | x1_i) and ``q_cond_1_given_2[j, i]`` is P(x1_i | x2_j), so each
    row sums to one.  Rows whose marginal mass is below ``UNDERFLOW_FLOOR``
    are flagged and their conditional rows zeroed, never divided.
    """

    rho: float
    var1: float
    var2: float
    x_grid_1: np.ndarray
    x_grid_2: np.ndarray
    q_joint: np.ndarray = field(repr=False)
    q_marg_1: np.ndarray = field(repr=False)
    q_marg_2: np.ndarray = field(repr=False)
    q_cond_2_given_1: np.ndarray = field(repr=False)
    q_cond_1_given_2: np.ndarray = field(repr=False)
    flagged_rows_1: np.ndarray = field(repr=False)
    flagged_rows_2: np.ndarray = field(repr=False)

    def x_grid(self, side: int) -> np.ndarray:
        return self.x_grid_1 if side == 1 else self.x_grid_2

    def marginal(self, side: int) -> np.ndarray:
        return self.q_marg_1 if side == 1 else self.q_marg_2

    def flagged_rows(self, side: int) -> np.ndarray:
        return self.flagged_rows_1 if side == 1 else self.flagged_rows_2

    def conditional_other_given(self, side: int) -> np.ndarray:
        """Conditional masses of the opposite source given this one, row = own grid."""
        return self.q_cond_2_given_1 if side == 1 else self.q_cond_1_given_2

    def variance(self, side: int) -> float:
        return self.var1 if side == 1 else self.var2


@dataclass(frozen=True)
class NoiseModel:
    """Discretized zero-mean Gaussian channel noise."""

    var: float
    n_grid: np.ndarray
    n_mass: np.ndarray


@dataclass(frozen=True)
class OutputGrid:
    """Uniform channel-output lattices, one axis per channel."""

    y_grid_1: np.ndarray
    y_grid_2: np.ndarray

    def axis(self, side: int) -> np.ndarray:
        return self.y_grid_1 if side == 1 else self.y_grid_2


def _gaussian_masses(grid: np.ndarray, var: float) -> np.ndarray:
    logp = -0.5 * grid**2 / var
    logp -= logp.max()
    mass = np.exp(logp)
    return mass / mass.sum()


def build_source_model(
    rho: float,
    var1: float = 1.0,
    var2: float = 1.0,
    n_points: int = DEFAULT_N_X,
    span_sigmas: float = DEFAULT_SOURCE_SPAN,
) -> SourceModel:
    """Discretize a bivariate normal onto a uniform grid pair.

    Masses are proportional to the joint density at the grid nodes and
    normalized to sum to one; marginals and conditionals are derived from
    the joint, so they are consistent by construction.
    """
    if not abs(rho) < 1:
        raise ConfigurationError(f"correlation must satisfy |rho| < 1, got {rho}")
    if var1 <= 0 or var2 <= 0:
        raise ConfigurationError(f"source variances must be positive, got {var1}, {var2}")
    if n_points < 8:
        raise ConfigurationError(f"need at least 8 source grid points, got {n_points}")
    if span_sigmas <= 0:
        raise ConfigurationError(f"span_sigmas must be positive, got {span_sigmas}")

    s1, s2 = np.sqrt(var1), np.sqrt(var2)
    x1 = np.linspace(-span_sigmas * s1, span_sigmas * s1, n_points)
    x2 = np.linspace(-span_sigmas * s2, span_sigmas * s2, n_points)

    # Log-density of the bivariate normal at the node lattice; constants drop
    # out under normalization.  Standardized coordinates keep the quadratic
    # form well conditioned even at |rho| close to 1.
    z1 = (x1 / s1)[:, None]
    z2 = (x2 / s2)[None, :]
    logp = -0.5 * (z1**2 - 2.0 * rho * z1 * z2 + z2**2) / (1.0 - rho**2)
    logp -= logp.max()
    q = np.exp(logp)
    q /= q.sum()

    marg1 = q.sum(axis=1)
    marg2 = q.sum(axis=0)
    flagged1 = marg1 < UNDERFLOW_FLOOR
    flagged2 = marg2 < UNDERFLOW_FLOOR

    cond21 = np.zeros_like(q)
    ok1 = ~flagged1
    cond21[ok1] = q[ok1] / marg1[ok1, None]
    cond12 = np.zeros_like(q.T)
    ok2 = ~flagged2
    cond12[ok2] = q.T[ok2] / marg2[ok2, None]

    return SourceModel(
        rho=rho,
        var1=var1,
        var2=var2,
        x_grid_1=x1,
        x_grid_2=x2,
        q_joint=q,
        q_marg_1=marg1,
        q_marg_2=marg2,
        q_cond_2_given_1=cond21,
        q_cond_1_given_2=cond12,
        flagged_rows_1=flagged1,
        flagged_rows_2=flagged2,
    )


def build_noise_model(
    var: float,
    n_points: int = DEFAULT_N_N,
    span_sigmas: float = DEFAULT_NOISE_SPAN,
) -> NoiseModel:
    """Discretize zero-mean Gaussian noise onto a symmetric uniform grid."""
    if var <= 0:
        raise ConfigurationError(f"noise variance must be positive, got {var}")
    if n_points < 5:
        raise ConfigurationError(f"need at least 5 noise grid points, got {n_points}")
    if span_sigmas <= 0:
        raise ConfigurationError(f"span_sigmas must be positive, got {span_sigmas}")

    s = np.sqrt(var)
    grid = np.linspace(-span_sigmas * s, span_sigmas * s, n_points)
    mass = _gaussian_masses(grid, var)
    # Enforce exact symmetry; linspace endpoints are already mirror images.
    mass = 0.5 * (mass + mass[::-1])
    mass /= mass.sum()
    return NoiseModel(var=var, n_grid=grid, n_mass=mass)


def _encoder_output_range(encoder) -> tuple[float, float]:
    """Extreme encoder outputs over the source grid, across all local models."""
    outputs = _all_model_outputs(encoder)
    return float(outputs.min()), float(outputs.max())


def _all_model_outputs(encoder) -> np.ndarray:
    # Accepts a RandomizedEncoder-like object (slopes/intercepts + x_grid) or
    # a plain array of per-node output values.
    values = getattr(encoder, "values", None)
    if values is not None:
        return np.asarray(values)
    if isinstance(encoder, np.ndarray):
        return encoder
    x = encoder.x_grid
    return x[:, None] * encoder.slopes[None, :] + encoder.intercepts[None, :]


def build_output_axis(encoder, noise: NoiseModel, n_points: int, margin: float = 0.0) -> np.ndarray:
    """Uniform grid covering the reachable range of encoder output plus noise.

    A constant encoder has a zero-width image; it is widened to
    ``MIN_GRID_WIDTH`` (with a warning) so the grid always has distinct
    nodes around the signal point.
    """
    if n_points < 16:
        raise ConfigurationError(f"need at least 16 output grid points, got {n_points}")
    g_lo, g_hi = _encoder_output_range(encoder)
    if not (np.isfinite(g_lo) and np.isfinite(g_hi)):
        raise ConfigurationError("encoder parameters are not finite")
    if g_hi - g_lo < MIN_GRID_WIDTH:
        warnings.warn(
            "encoder output range is degenerate; widening to minimum width",
            RuntimeWarning,
            stacklevel=2,
        )
        center = 0.5 * (g_lo + g_hi)
        g_lo, g_hi = center - 0.5 * MIN_GRID_WIDTH, center + 0.5 * MIN_GRID_WIDTH
    lo = g_lo + float(noise.n_grid.min())
    hi = g_hi + float(noise.n_grid.max())
    pad = 0.5 * margin * (hi - lo)
    return np.linspace(lo - pad, hi + pad, n_points)


def build_output_grid(
    encoders,
    noises,
    n_points: int = DEFAULT_N_Y,
    margin: float = 0.0,
) -> OutputGrid:
    """Build both channel-output axes.

    ``encoders`` and ``noises`` may be single objects (shared by both
    channels) or 2-sequences, one per channel.
    """
    if not isinstance(encoders, (tuple, list)):
        encoders = (encoders, encoders)
    if not isinstance(noises, (tuple, list)):
        noises = (noises, noises)
    y1 = build_output_axis(encoders[0], noises[0], n_points, margin)
    y2 = build_output_axis(encoders[1], noises[1], n_points, margin)
    return OutputGrid(y_grid_1=y1, y_grid_2=y2)


def grid_moments(grid: np.ndarray, mass: np.ndarray) -> tuple[float, float]:
    """Mean and variance of a discrete distribution on a grid."""
    mean = float(np.dot(mass, grid))
    var = float(np.dot(mass, (grid - mean) ** 2))
    return mean, var
