"""Descent baselines: pointwise greedy optimization and noisy-channel relaxation.

The greedy engine works on unstructured grid encoders (one free output
value per source node).  It alternates a decoder rebuild with per-node
value updates; with the decoder and the opposite encoder held fixed the
node subproblems are independent, so each update scans a candidate set for
every node in one vectorized pass (a snapshot-parallel sweep, which keeps
results deterministic) and then refines the winner with a golden-section
search.  The deterministic-annealing path reduces to exactly this engine
once associations harden, so it doubles as the zero-temperature finisher.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codebook import DecoderTable, grid_encoder_power
from .errors import ConfigurationError, NumericAbortError
from .numerics import NoiseModel, SourceModel, build_noise_model, build_output_grid
from .objective import (
    CostReport,
    LagrangeWeights,
    NodeCostEvaluator,
    compute_decoder,
    compute_distortion_tensor,
    cost_report,
    expected_distortion,
)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GridEncoder:
    """Deterministic encoder as raw per-node output values."""

    values: np.ndarray


@dataclass(frozen=True)
class NcrConfig:
    """Noise-inflation schedule for noisy-channel relaxation."""

    sigma2_start: float
    ncr_alpha: float
    stages: int

    def validate(self, true_var: float):
        if self.sigma2_start < true_var:
            raise ConfigurationError(
                f"relaxation must start at or above the true noise variance "
                f"({self.sigma2_start} < {true_var})"
            )
        if not 0 < self.ncr_alpha < 1:
            raise ConfigurationError(f"ncr_alpha must be in (0, 1), got {self.ncr_alpha}")
        if self.stages < 1:
            raise ConfigurationError(f"need at least one stage, got {self.stages}")


@dataclass(frozen=True)
class GreedyResult:
    values1: np.ndarray
    values2: np.ndarray
    decoder: DecoderTable
    costs: CostReport
    sweeps: int
    # (before, after) Lagrangian of the node updates within each sweep,
    # both measured under that sweep's decoder.
    sweep_trail: tuple = field(default=())

    @property
    def lagrangian(self) -> float:
        return self.costs.lagrangian


def _as_values(encoder) -> np.ndarray:
    values = getattr(encoder, "values", encoder)
    return np.array(values, dtype=float)


def _evaluate(source, noise1, noise2, v1, v2, decoder, weights) -> CostReport:
    tensor = compute_distortion_tensor(source, noise1, noise2, v1, v2, decoder)
    distortion = expected_distortion(tensor, source, v1, v2)
    p1 = grid_encoder_power(v1, source.q_marg_1)
    p2 = grid_encoder_power(v2, source.q_marg_2)
    return cost_report(distortion, p1, p2, 0.0, weights, 0.0)


def _output_std(values: np.ndarray, marginal: np.ndarray, noise: NoiseModel) -> float:
    mean = float(np.dot(marginal, values))
    var_g = float(np.dot(marginal, (values - mean) ** 2))
    var_n = float(np.dot(noise.n_mass, noise.n_grid**2))
    return float(np.sqrt(var_g + var_n))


def _update_side(source, noise1, noise2, decoder, side, own, other, lam, n_candidates, span_factor, golden_iters):
    """Best per-node output values under a fixed decoder and opposite encoder."""
    scorer = NodeCostEvaluator(source, noise1, noise2, decoder, side, other)
    own_noise = noise1 if side == 1 else noise2
    sigma_y = _output_std(own, source.marginal(side), own_noise)

    offsets = np.linspace(-span_factor * sigma_y, span_factor * sigma_y, n_candidates)
    candidates = np.concatenate([own[None, :], own[None, :] + offsets[:, None]], axis=0)
    costs = scorer.costs(candidates) + lam * candidates**2
    best = np.argmin(costs, axis=0)
    cols = np.arange(len(own))
    best_vals = candidates[best, cols]
    best_cost = costs[best, cols]

    def score(vals):
        return scorer.costs(vals[None, :])[0] + lam * vals**2

    # Golden-section refinement around each node's winner, one candidate
    # spacing wide, all nodes advanced in lockstep with one batched
    # evaluation per iteration.
    spacing = offsets[1] - offsets[0] if n_candidates > 1 else sigma_y
    lo = best_vals - spacing
    hi = best_vals + spacing
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc = score(c)
    fd = score(d)
    for _ in range(golden_iters):
        left = fc < fd
        lo = np.where(left, lo, c)
        hi = np.where(left, d, hi)
        new_c = hi - _GOLDEN * (hi - lo)
        new_d = lo + _GOLDEN * (hi - lo)
        probe = np.where(left, new_c, new_d)
        f_probe = score(probe)
        c, d, fc, fd = (
            np.where(left, new_c, d),
            np.where(left, c, new_d),
            np.where(left, f_probe, fd),
            np.where(left, fc, f_probe),
        )
    refined = np.where(fc < fd, c, d)
    f_refined = np.where(fc < fd, fc, fd)

    improved = f_refined < best_cost
    return np.where(improved, refined, best_vals), np.where(improved, f_refined, best_cost)


def greedy_descend(
    init_enc1,
    init_enc2,
    source: SourceModel,
    noises: tuple[NoiseModel, NoiseModel],
    weights: LagrangeWeights,
    tol: float = 1e-5,
    max_sweeps: int = 200,
    n_candidates: int = 33,
    span_factor: float = 2.0,
    golden_iters: int = 28,
    n_outputs: int = 96,
    grid_margin: float = 0.05,
    grid_guard: float = 0.90,
) -> GreedyResult:
    """Alternate decoder rebuilds with exact per-node candidate minimization.

    Each sweep rebuilds the decoder, then updates encoder 1 and encoder 2 in
    turn.  A node's candidate set is its current value plus ``n_candidates``
    values spanning +-``span_factor`` output standard deviations, followed
    by a golden-section refinement around the winner; the current value
    stays in the set, so the Lagrangian never increases within a sweep.
    Stops when the relative Lagrangian change between sweeps is below
    ``tol``.
    """
    noise1, noise2 = noises
    v1 = _as_values(init_enc1)
    v2 = _as_values(init_enc2)
    if len(v1) != len(source.x_grid_1) or len(v2) != len(source.x_grid_2):
        raise ConfigurationError("initial encoder lengths do not match the source grids")

    grid = build_output_grid((v1, v2), noises, n_outputs, grid_margin)
    decoder = compute_decoder(source, noise1, noise2, v1, v2, grid)
    j_prev = None
    trail = []
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        if _values_escape(grid, v1, v2, grid_guard):
            grid = build_output_grid((v1, v2), noises, n_outputs, grid_margin)
        decoder = compute_decoder(source, noise1, noise2, v1, v2, grid)
        j_pre = _evaluate(source, noise1, noise2, v1, v2, decoder, weights).lagrangian

        v1, _ = _update_side(
            source, noise1, noise2, decoder, 1, v1, v2, weights.lambda1,
            n_candidates, span_factor, golden_iters,
        )
        v2, _ = _update_side(
            source, noise1, noise2, decoder, 2, v2, v1, weights.lambda2,
            n_candidates, span_factor, golden_iters,
        )

        report = _evaluate(source, noise1, noise2, v1, v2, decoder, weights)
        j_now = report.lagrangian
        trail.append((j_pre, j_now))
        if not np.isfinite(j_now):
            raise NumericAbortError("greedy sweep produced a non-finite cost", {"sweep": sweeps})
        if j_prev is not None and abs(j_now - j_prev) <= tol * abs(j_now):
            break
        j_prev = j_now

    decoder = compute_decoder(source, noise1, noise2, v1, v2, grid)
    final = _evaluate(source, noise1, noise2, v1, v2, decoder, weights)
    return GreedyResult(
        values1=v1,
        values2=v2,
        decoder=decoder,
        costs=final,
        sweeps=sweeps,
        sweep_trail=tuple(trail),
    )


def _values_escape(grid, v1, v2, guard: float) -> bool:
    for side, values in ((1, v1), (2, v2)):
        axis = grid.axis(side)
        center = 0.5 * (axis[0] + axis[-1])
        half = 0.5 * (axis[-1] - axis[0]) * guard
        if values.min() < center - half or values.max() > center + half:
            return True
    return False


def ncr(
    config: NcrConfig,
    source: SourceModel,
    noises: tuple[NoiseModel, NoiseModel],
    weights: LagrangeWeights,
    init,
    tol: float = 1e-5,
    **greedy_kwargs,
) -> GreedyResult:
    """Noisy-channel relaxation: track the greedy solution from inflated noise.

    Runs the greedy engine at ``sigma2_start``, geometrically shrinking the
    noise variance by ``ncr_alpha`` per stage, warm-starting each stage from
    the previous solution.  The final stage always runs at the true
    variance, whatever the schedule rounding.
    """
    noise1, noise2 = noises
    true_var = noise1.var
    config.validate(true_var)

    variances = [max(config.sigma2_start * config.ncr_alpha**s, true_var) for s in range(config.stages)]
    variances[-1] = true_var

    def rebuilt(noise: NoiseModel, var: float) -> NoiseModel:
        if var == noise.var:
            return noise
        span = float(noise.n_grid[-1] / np.sqrt(noise.var))
        return build_noise_model(var, len(noise.n_grid), span)

    v1, v2 = _as_values(init[0]), _as_values(init[1])
    result = None
    for var in variances:
        stage_noises = (rebuilt(noise1, var), rebuilt(noise2, var))
        result = greedy_descend(v1, v2, source, stage_noises, weights, tol=tol, **greedy_kwargs)
        v1, v2 = result.values1, result.values2
    return result
