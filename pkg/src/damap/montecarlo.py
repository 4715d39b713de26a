"""Monte-Carlo validation of a converged system against the grid quadrature.

Sources and noises are drawn from their exact continuous distributions (not
the lattice); each sample is encoded by the nearest source-grid node's
hardened output value (the converged encoders are deliberately
discontinuous, so interpolating across a jump would fabricate outputs that
the map never produces) and decoded through the bilinear table lookup.

Because the simulated encoder quantizes the source to the lattice, the
simulated distortion carries the within-cell variance of the source on top
of what the node-mass quadrature can represent.  That floor is computable
in closed form from the Gaussian cell moments, so the agreement check
reports both the raw gap and the gap after adding the correction; only the
latter is meaningful once the floor exceeds the sampling error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .codebook import DecoderTable, decode_many


@dataclass(frozen=True)
class MonteCarloResult:
    distortion: float
    stderr: float
    power1: float
    power2: float
    power1_stderr: float
    power2_stderr: float
    n_samples: int
    # Same simulation scored against the quantized (nearest-node) source:
    # the exact quantity the node-mass quadrature computes, so this is the
    # like-for-like agreement check for grid distortion.
    distortion_node: float
    stderr_node: float
    quantization_floor: float


def nearest_node_lookup(values: np.ndarray, grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Hardened output of the nearest grid node, vectorized over samples."""
    h = grid[1] - grid[0]
    idx = np.clip(np.rint((x - grid[0]) / h).astype(np.int64), 0, len(grid) - 1)
    return values[idx]


def replicate_to_grid(values: np.ndarray, coarse_grid: np.ndarray, fine_grid: np.ndarray) -> np.ndarray:
    """Re-express a nearest-node encoder on a finer lattice, exactly.

    The hardened encoder is piecewise constant over the coarse cells, so its
    values on any finer lattice are the coarse values of the nearest coarse
    node.  Useful for re-evaluating a converged system's grid distortion at
    a resolution that resolves the conditional ridge of highly correlated
    sources (the coarse lattice used during optimization can underweight
    cross-ridge structure, which the Monte-Carlo agreement check flags).
    """
    return nearest_node_lookup(np.asarray(values, float), np.asarray(coarse_grid, float), np.asarray(fine_grid, float))


def gaussian_cell_variance(grid: np.ndarray, var: float) -> float:
    """Expected squared quantization error of nearest-node rounding.

    Cells are the midpoint intervals of the uniform grid (outer cells extend
    to infinity).  Uses the closed-form truncated-Gaussian moments, so the
    Monte-Carlo agreement check can separate quadrature error from the
    quantization floor that the sampled system necessarily includes.
    """
    sigma = np.sqrt(var)
    h = grid[1] - grid[0]
    edges = np.concatenate([[-np.inf], grid[:-1] + 0.5 * h, [np.inf]])
    lo, hi = edges[:-1], edges[1:]

    def phi(z):
        return np.exp(-0.5 * z**2) / np.sqrt(2 * np.pi)

    def cdf(z):
        return 0.5 * (1 + special.erf(z / np.sqrt(2)))

    zlo = np.where(np.isfinite(lo), lo / sigma, -np.inf)
    zhi = np.where(np.isfinite(hi), hi / sigma, np.inf)
    prob = cdf(zhi) - cdf(zlo)
    phi_lo = np.zeros_like(prob)
    phi_hi = np.zeros_like(prob)
    zphi_lo = np.zeros_like(prob)
    zphi_hi = np.zeros_like(prob)
    m_lo = np.isfinite(zlo)
    m_hi = np.isfinite(zhi)
    phi_lo[m_lo] = phi(zlo[m_lo])
    phi_hi[m_hi] = phi(zhi[m_hi])
    zphi_lo[m_lo] = zlo[m_lo] * phi_lo[m_lo]
    zphi_hi[m_hi] = zhi[m_hi] * phi_hi[m_hi]
    # Cellwise E[(X - c)^2 ; X in cell] = var_cell + (mean_cell - c)^2, per cell mass.
    ex = sigma * (phi_lo - phi_hi)
    ex2 = var * (prob + zphi_lo - zphi_hi)
    c = grid
    total = ex2 - 2.0 * c * ex + c**2 * prob
    return float(total.sum())


def monte_carlo_validate(
    values1: np.ndarray,
    values2: np.ndarray,
    x_grid_1: np.ndarray,
    x_grid_2: np.ndarray,
    decoder: DecoderTable,
    rho: float,
    var1: float,
    var2: float,
    noise_var: float,
    n_samples: int,
    seed: int,
) -> MonteCarloResult:
    """Empirical distortion and powers of the hardened system.

    Deterministic for a fixed seed.  ``stderr`` is the standard error of the
    per-sample squared-error sum.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(n_samples)
    z2 = rng.standard_normal(n_samples)
    x1 = np.sqrt(var1) * z1
    x2 = np.sqrt(var2) * (rho * z1 + np.sqrt(1.0 - rho**2) * z2)
    noise1 = rng.normal(0.0, np.sqrt(noise_var), n_samples)
    noise2 = rng.normal(0.0, np.sqrt(noise_var), n_samples)

    h1 = x_grid_1[1] - x_grid_1[0]
    i1 = np.clip(np.rint((x1 - x_grid_1[0]) / h1).astype(np.int64), 0, len(x_grid_1) - 1)
    h2 = x_grid_2[1] - x_grid_2[0]
    i2 = np.clip(np.rint((x2 - x_grid_2[0]) / h2).astype(np.int64), 0, len(x_grid_2) - 1)
    g1 = np.asarray(values1, float)[i1]
    g2 = np.asarray(values2, float)[i2]
    xh1, xh2 = decode_many(decoder, g1 + noise1, g2 + noise2)

    per_sample = (x1 - xh1) ** 2 + (x2 - xh2) ** 2
    per_sample_node = (x_grid_1[i1] - xh1) ** 2 + (x_grid_2[i2] - xh2) ** 2
    sq1 = g1**2
    sq2 = g2**2
    floor = gaussian_cell_variance(x_grid_1, var1) + gaussian_cell_variance(x_grid_2, var2)
    root_n = np.sqrt(n_samples)
    return MonteCarloResult(
        distortion=float(per_sample.mean()),
        stderr=float(per_sample.std(ddof=1) / root_n),
        power1=float(sq1.mean()),
        power2=float(sq2.mean()),
        power1_stderr=float(sq1.std(ddof=1) / root_n),
        power2_stderr=float(sq2.std(ddof=1) / root_n),
        n_samples=n_samples,
        distortion_node=float(per_sample_node.mean()),
        stderr_node=float(per_sample_node.std(ddof=1) / root_n),
        quantization_floor=floor,
    )
