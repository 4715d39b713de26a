"""Deterministic-annealing outer loop.

Starting from coincident local models and uniform associations at high
temperature, the temperature is lowered geometrically.  At each temperature
the models are slightly perturbed (so phase transitions can trigger), then
decoder tables, Gibbs associations, and model parameters are cycled until
the free energy settles.  Below the final temperature the associations are
hardened and the same coordinate descent continues on the Lagrangian
alone; the result is then handed to the pointwise greedy engine, which is
what the annealing dynamics reduce to at zero temperature, for a final
polish on the unstructured grid map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .codebook import (
    DecoderTable,
    RandomizedEncoder,
    encoder_power,
    harden,
    make_encoder,
    model_outputs,
    one_hot_assoc,
)
from .errors import ConfigurationError, NumericAbortError
from .numerics import NoiseModel, SourceModel, build_output_grid
from .objective import (
    CostReport,
    DistortionTensor,
    LagrangeWeights,
    ModelCostContext,
    TensorEvaluator,
    compute_decoder,
    compute_entropy,
    conditional_model_cost,
    cost_report,
    expected_distortion,
    gibbs_update,
)

_ARMIJO_C = 1e-4
_STEP_UNDERFLOW = 1e-12


@dataclass(frozen=True)
class AnnealConfig:
    """Schedule and descent controls for one annealing run."""

    n_models_1: int = 4
    n_models_2: int = 4
    t_init: float | None = None       # None: 10x the initial distortion
    t_min: float | None = None        # None: 1e-5 * t_init
    alpha: float = 0.95
    perturb_eps: float = 0.01
    inner_tol: float = 1e-5
    inner_max_iters: int = 50
    gd_step_init: float = 0.25
    gd_backtrack_factor: float = 0.5
    gd_max_iters: int = 30            # backtracking trials per descent step
    gd_steps: int = 25                # descent steps per side per call
    rng_seed: int = 0
    merge_tol: float = 0.01
    n_outputs: int = 96
    grid_margin: float = 0.05
    grid_guard: float = 0.90          # rebuild when hardened values leave this inner fraction
    polish: bool = True               # finish with the pointwise greedy engine
    polish_tol: float | None = None   # default: inner_tol / 10

    def validate(self):
        if self.n_models_1 < 1 or self.n_models_2 < 1:
            raise ConfigurationError("each encoder needs at least one local model")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"cooling factor must be in (0, 1), got {self.alpha}")
        if self.t_init is not None and self.t_init <= 0:
            raise ConfigurationError(f"t_init must be positive, got {self.t_init}")
        if self.t_min is not None:
            if self.t_min <= 0:
                raise ConfigurationError(f"t_min must be positive, got {self.t_min}")
            if self.t_init is not None and not self.t_min < self.t_init:
                raise ConfigurationError("t_min must be below t_init")
        if self.perturb_eps < 0:
            raise ConfigurationError("perturb_eps must be nonnegative")
        if self.inner_tol <= 0 or self.inner_max_iters < 1:
            raise ConfigurationError("inner loop tolerances must be positive")
        if self.gd_step_init <= 0 or not 0 < self.gd_backtrack_factor < 1 or self.gd_max_iters < 1:
            raise ConfigurationError("invalid gradient-descent controls")


@dataclass(frozen=True)
class TemperatureRecord:
    temperature: float
    distortion: float
    power1: float
    power2: float
    entropy: float
    lagrangian: float
    free_energy: float
    clusters1: int
    clusters2: int
    inner_iters: int


@dataclass
class AnnealReport:
    """Per-temperature telemetry of one run."""

    records: list[TemperatureRecord] = field(default_factory=list)
    inner_free_energies: list[list[float]] = field(default_factory=list)
    critical_temperatures: list[float] = field(default_factory=list)
    t_init: float = 0.0
    t_min: float = 0.0
    grid_rebuilds: int = 0
    decoder_fill_nodes: int = 0
    zero_t_iters: int = 0
    polish_sweeps: int = 0

    def add(self, record: TemperatureRecord, inner_fs: list[float], on_record=None):
        if self.records:
            prev = self.records[-1]
            if record.clusters1 > prev.clusters1 or record.clusters2 > prev.clusters2:
                self.critical_temperatures.append(record.temperature)
        self.records.append(record)
        self.inner_free_energies.append(list(inner_fs))
        if on_record is not None:
            on_record(record)


@dataclass(frozen=True)
class AnnealResult:
    encoder1: RandomizedEncoder
    encoder2: RandomizedEncoder
    values1: np.ndarray
    values2: np.ndarray
    decoder: DecoderTable
    report: AnnealReport
    final: CostReport


def init_state(
    config: AnnealConfig, source: SourceModel, power_target=None
) -> tuple[RandomizedEncoder, RandomizedEncoder]:
    """Coincident scaled-identity models with exactly uniform associations.

    The common slope is sized so a single linear model would transmit at
    ``power_target`` (one value or a per-encoder pair; defaults to the
    source variance, i.e. unit slope).
    """
    if power_target is None:
        targets = (source.var1, source.var2)
    elif np.isscalar(power_target):
        targets = (float(power_target), float(power_target))
    else:
        targets = (float(power_target[0]), float(power_target[1]))
    encoders = []
    for side, (k, target) in enumerate(
        [(config.n_models_1, targets[0]), (config.n_models_2, targets[1])], start=1
    ):
        if target <= 0:
            raise ConfigurationError(f"power target must be positive, got {target}")
        slope = float(np.sqrt(target / source.variance(side)))
        grid = source.x_grid(side)
        assoc = np.full((len(grid), k), 1.0 / k)
        encoders.append(make_encoder([(slope, 0.0)] * k, assoc, grid))
    return encoders[0], encoders[1]


def perturb(
    encoder: RandomizedEncoder, eps: float, rng: np.random.Generator, intercept_scale: float
) -> RandomizedEncoder:
    """Uniform jitter of every model parameter, scaled per parameter class.

    Slopes move within eps times the mean absolute slope (floored at 1e-3);
    intercepts within eps times ``intercept_scale`` (the source standard
    deviation).  Draws are consumed even when eps is zero so the random
    stream does not depend on eps.
    """
    scale_a = max(float(np.mean(np.abs(encoder.slopes))), 1e-3)
    jitter = rng.uniform(-1.0, 1.0, size=(2, encoder.n_models))
    return encoder.with_params(
        encoder.slopes + eps * scale_a * jitter[0],
        encoder.intercepts + eps * intercept_scale * jitter[1],
    )


def cluster_count(encoder: RandomizedEncoder, merge_tol: float, intercept_scale: float = 1.0) -> int:
    """Distinct model groups under single-linkage parameter distance."""
    if merge_tol <= 0:
        raise ConfigurationError("merge_tol must be positive")
    k = encoder.n_models
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(k):
        for j in range(i + 1, k):
            d = max(
                abs(encoder.slopes[i] - encoder.slopes[j]),
                abs(encoder.intercepts[i] - encoder.intercepts[j]) / intercept_scale,
            )
            if d <= merge_tol:
                parent[find(i)] = find(j)
    return len({find(i) for i in range(k)})


def finite_difference_gradient(fn, theta: np.ndarray, rel_step: float = 1e-4, abs_floor: float = 1e-6):
    """Central finite differences; ``fn(vector, changed_index)`` lets the
    callee exploit single-coordinate changes."""
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        h = max(rel_step * abs(theta[i]), abs_floor)
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        grad[i] = (fn(up, i) - fn(down, i)) / (2.0 * h)
    return grad


def optimize_models(
    enc1: RandomizedEncoder,
    enc2: RandomizedEncoder,
    evaluator: TensorEvaluator,
    weights: LagrangeWeights,
    config: AnnealConfig,
) -> tuple[RandomizedEncoder, RandomizedEncoder]:
    """One descent step on each encoder's model parameters.

    Associations and decoder stay fixed, so the association entropy is
    constant and descending the Lagrangian descends the free energy.  Each
    side takes a central finite-difference gradient (relative step 1e-4,
    floor 1e-6) over its stacked (slopes, intercepts) vector, followed by
    an Armijo backtracking search; steps are only accepted when they
    improve, so the free energy never increases here.  With everything
    else frozen the cost is separable across local models, which the probe
    bookkeeping exploits.  On acceptance the tensor evaluator is
    recommitted to the new models.
    """
    source = evaluator.source
    encs = {1: enc1, 2: enc2}
    moved_any = False
    for side in (1, 2):
        enc = encs[side]
        other = encs[3 - side]
        ctx = ModelCostContext(evaluator, side, other.assoc)
        x = source.x_grid(side)
        assoc = enc.assoc
        lam = weights.of(side)
        k = enc.n_models
        power_w = source.marginal(side)[:, None] * assoc

        def columns_of(theta) -> np.ndarray:
            return x[None, :] * theta[:k, None] + theta[k:, None]      # (k, n)

        def terms_of(columns) -> np.ndarray:
            dist = np.einsum("mi,im->m", ctx.model_cost(columns), assoc)
            power = np.einsum("im,mi->m", power_w, columns**2)
            return dist + lam * power

        def fd_gradient(theta, base_terms):
            # Batched central differences: one context call scores all
            # probe columns (2 per parameter).
            steps = np.maximum(1e-4 * np.abs(theta), 1e-6)
            probes = np.empty((2 * len(theta), len(x)))
            for i in range(len(theta)):
                m = i % k
                up = theta.copy()
                up[i] += steps[i]
                down = theta.copy()
                down[i] -= steps[i]
                probes[2 * i] = x * up[m] + up[k + m]
                probes[2 * i + 1] = x * down[m] + down[k + m]
            costs = ctx.model_cost(probes)
            grad = np.empty_like(theta)
            for i in range(len(theta)):
                m = i % k
                f_up = float(np.dot(costs[2 * i], assoc[:, m])) + lam * float(
                    np.dot(power_w[:, m], probes[2 * i] ** 2)
                )
                f_dn = float(np.dot(costs[2 * i + 1], assoc[:, m])) + lam * float(
                    np.dot(power_w[:, m], probes[2 * i + 1] ** 2)
                )
                grad[i] = (f_up - f_dn) / (2.0 * steps[i])
            return grad

        theta = np.concatenate([enc.slopes, enc.intercepts])
        base_terms = terms_of(columns_of(theta))
        f_now = float(base_terms.sum())
        moved = False
        for _ in range(config.gd_steps):
            grad = fd_gradient(theta, base_terms)
            gnorm_sq = float(np.dot(grad, grad))
            if gnorm_sq == 0.0 or not np.isfinite(gnorm_sq):
                break
            step = config.gd_step_init
            accepted = None
            for _ in range(config.gd_max_iters):
                trial = theta - step * grad
                trial_terms = terms_of(columns_of(trial))
                f_trial = float(trial_terms.sum())
                if np.isfinite(f_trial) and f_trial <= f_now - _ARMIJO_C * step * gnorm_sq:
                    accepted = (trial, trial_terms, f_trial)
                    break
                step *= config.gd_backtrack_factor
                if step < _STEP_UNDERFLOW * config.gd_step_init:
                    break
            if accepted is None:
                break
            theta, base_terms, f_new = accepted
            moved = True
            if abs(f_now - f_new) <= config.inner_tol * abs(f_new):
                f_now = f_new
                break
            f_now = f_new
        if moved:
            moved_any = True
            encs[side] = enc.with_params(theta[: enc.n_models], theta[enc.n_models :])
            # Only the interpolation structures are needed for the other
            # side's context; the tensor itself is assembled once at the end.
            evaluator.set_side(side, model_outputs(encs[side]))
    if moved_any:
        evaluator.assemble()
    return encs[1], encs[2]


def _snapshot(source, enc1, enc2, evaluator, weights, temperature, hard: bool) -> CostReport:
    distortion = expected_distortion(DistortionTensor(evaluator.values), source, enc1, enc2)
    p1 = encoder_power(enc1, source.q_marg_1)
    p2 = encoder_power(enc2, source.q_marg_2)
    entropy = 0.0 if hard else compute_entropy(enc1, enc2, source)
    return cost_report(distortion, p1, p2, entropy, weights, temperature)


def _grid_needs_rebuild(grid, enc1, enc2, guard: float) -> bool:
    for side, enc in ((1, enc1), (2, enc2)):
        axis = grid.axis(side)
        center = 0.5 * (axis[0] + axis[-1])
        half = 0.5 * (axis[-1] - axis[0]) * guard
        values, _ = harden(enc)
        if values.min() < center - half or values.max() > center + half:
            return True
    return False


def anneal(
    config: AnnealConfig,
    source: SourceModel,
    noises: tuple[NoiseModel, NoiseModel],
    weights: LagrangeWeights,
    power_target=None,
    on_record=None,
) -> AnnealResult:
    """Full annealing run; see the module docstring for the loop structure.

    ``on_record`` is called with each TemperatureRecord as it is produced,
    so long runs can stream progress.  Raises NumericAbortError with a
    diagnostic payload if the free energy goes non-finite.
    """
    config.validate()
    noise1, noise2 = noises
    rng = np.random.default_rng(config.rng_seed)
    enc1, enc2 = init_state(config, source, power_target)
    std1 = float(np.sqrt(source.var1))
    std2 = float(np.sqrt(source.var2))

    grid = build_output_grid((enc1, enc2), noises, config.n_outputs, config.grid_margin)
    report = AnnealReport()

    decoder = compute_decoder(source, noise1, noise2, enc1, enc2, grid)
    evaluator = TensorEvaluator(source, noise1, noise2, decoder)
    evaluator.rebuild(model_outputs(enc1), model_outputs(enc2))
    d0 = expected_distortion(DistortionTensor(evaluator.values), source, enc1, enc2)
    t_init = config.t_init if config.t_init is not None else 10.0 * d0
    t_min = config.t_min if config.t_min is not None else 1e-5 * t_init
    if not 0 < t_min < t_init:
        raise ConfigurationError(f"resolved schedule invalid: t_min={t_min}, t_init={t_init}")
    report.t_init, report.t_min = t_init, t_min

    temperature = t_init
    while temperature >= t_min * (1.0 - 1e-12):
        enc1 = perturb(enc1, config.perturb_eps, rng, std1)
        enc2 = perturb(enc2, config.perturb_eps, rng, std2)
        if _grid_needs_rebuild(grid, enc1, enc2, config.grid_guard):
            grid = build_output_grid((enc1, enc2), noises, config.n_outputs, config.grid_margin)
            report.grid_rebuilds += 1
        decoder, evaluator, enc1, enc2, inner_fs, snap = _inner_loop(
            config, source, noises, weights, grid, decoder, evaluator, enc1, enc2, temperature
        )
        report.decoder_fill_nodes = max(report.decoder_fill_nodes, decoder.n_filled)
        record = TemperatureRecord(
            temperature=temperature,
            distortion=snap.distortion,
            power1=snap.power1,
            power2=snap.power2,
            entropy=snap.entropy,
            lagrangian=snap.lagrangian,
            free_energy=snap.free_energy,
            clusters1=cluster_count(enc1, config.merge_tol, std1),
            clusters2=cluster_count(enc2, config.merge_tol, std2),
            inner_iters=len(inner_fs),
        )
        report.add(record, inner_fs, on_record)
        temperature *= config.alpha

    # Zero-temperature phase: hard associations, same coordinate cycle on J.
    enc1, enc2, decoder, evaluator, grid = _zero_temperature_affine(
        config, source, noises, weights, grid, decoder, evaluator, enc1, enc2, report
    )
    snap = _snapshot(source, enc1, enc2, evaluator, weights, 0.0, hard=True)
    record = TemperatureRecord(
        temperature=0.0,
        distortion=snap.distortion,
        power1=snap.power1,
        power2=snap.power2,
        entropy=0.0,
        lagrangian=snap.lagrangian,
        free_energy=snap.lagrangian,
        clusters1=cluster_count(enc1, config.merge_tol, std1),
        clusters2=cluster_count(enc2, config.merge_tol, std2),
        inner_iters=report.zero_t_iters,
    )
    report.add(record, [snap.lagrangian], on_record)

    values1, _ = harden(enc1)
    values2, _ = harden(enc2)
    if config.polish:
        # The polish converges tighter than inner_tol so that restarting the
        # greedy engine from the final state stays inside inner_tol.
        polish_tol = config.polish_tol if config.polish_tol is not None else 0.1 * config.inner_tol
        polished = baselines.greedy_descend(
            values1,
            values2,
            source,
            noises,
            weights,
            tol=polish_tol,
            n_outputs=config.n_outputs,
            grid_margin=config.grid_margin,
            grid_guard=config.grid_guard,
        )
        values1, values2, decoder = polished.values1, polished.values2, polished.decoder
        report.polish_sweeps = polished.sweeps
        final = polished.costs
    else:
        final = cost_report(snap.distortion, snap.power1, snap.power2, 0.0, weights, 0.0)
    if not np.isfinite(final.lagrangian):
        raise NumericAbortError("non-finite final cost", {"stage": "final", "cost": final})
    return AnnealResult(
        encoder1=enc1,
        encoder2=enc2,
        values1=values1,
        values2=values2,
        decoder=decoder,
        report=report,
        final=final,
    )


def _inner_loop(
    config, source, noises, weights, grid, decoder, evaluator, enc1, enc2, temperature
):
    """Cycle decoder / associations / models at one temperature until the
    free energy is stationary.  The decoder refresh is guarded: a new table
    is only adopted if it does not increase the tensor-metric free energy
    (quadrature mismatch between the two noise discretizations can
    otherwise introduce sub-tolerance upticks)."""
    noise1, noise2 = noises
    inner_fs: list[float] = []
    f_prev = None
    snap = None
    for _ in range(config.inner_max_iters):
        candidate = compute_decoder(source, noise1, noise2, enc1, enc2, grid)
        cand_eval = TensorEvaluator(source, noise1, noise2, candidate)
        cand_eval.rebuild(model_outputs(enc1), model_outputs(enc2))
        if f_prev is None:
            adopt = True
        else:
            f_cand = _snapshot(source, enc1, enc2, cand_eval, weights, temperature, hard=False)
            adopt = f_cand.free_energy <= f_prev + 1e-12 * abs(f_prev)
        if adopt:
            decoder, evaluator = candidate, cand_eval

        bar1, _ = conditional_model_cost(
            DistortionTensor(evaluator.values), source, enc2.assoc, weights.lambda1, enc1, side=1
        )
        enc1 = enc1.with_assoc(gibbs_update(bar1, temperature))
        bar2, _ = conditional_model_cost(
            DistortionTensor(evaluator.values), source, enc1.assoc, weights.lambda2, enc2, side=2
        )
        enc2 = enc2.with_assoc(gibbs_update(bar2, temperature))

        enc1, enc2 = optimize_models(enc1, enc2, evaluator, weights, config)

        snap = _snapshot(source, enc1, enc2, evaluator, weights, temperature, hard=False)
        f_now = snap.free_energy
        if not np.isfinite(f_now):
            raise NumericAbortError(
                "free energy became non-finite",
                {"temperature": temperature, "snapshot": snap},
            )
        inner_fs.append(f_now)
        if f_prev is not None and abs(f_now - f_prev) <= config.inner_tol * abs(f_now):
            break
        f_prev = f_now
    return decoder, evaluator, enc1, enc2, inner_fs, snap


def _zero_temperature_affine(
    config, source, noises, weights, grid, decoder, evaluator, enc1, enc2, report
):
    """Hard-assignment coordinate descent within the affine model class."""
    noise1, noise2 = noises
    v1, w1 = harden(enc1)
    enc1 = enc1.with_assoc(one_hot_assoc(w1, enc1.n_models))
    v2, w2 = harden(enc2)
    enc2 = enc2.with_assoc(one_hot_assoc(w2, enc2.n_models))

    j_prev = None
    for it in range(config.inner_max_iters):
        if _grid_needs_rebuild(grid, enc1, enc2, config.grid_guard):
            grid = build_output_grid((enc1, enc2), noises, config.n_outputs, config.grid_margin)
            report.grid_rebuilds += 1
        candidate = compute_decoder(source, noise1, noise2, enc1, enc2, grid)
        cand_eval = TensorEvaluator(source, noise1, noise2, candidate)
        cand_eval.rebuild(model_outputs(enc1), model_outputs(enc2))
        if j_prev is None:
            decoder, evaluator = candidate, cand_eval
        else:
            j_cand = _snapshot(source, enc1, enc2, cand_eval, weights, 0.0, hard=True).lagrangian
            if j_cand <= j_prev + 1e-12 * abs(j_prev):
                decoder, evaluator = candidate, cand_eval

        bar1, _ = conditional_model_cost(
            DistortionTensor(evaluator.values), source, enc2.assoc, weights.lambda1, enc1, side=1
        )
        enc1 = enc1.with_assoc(one_hot_assoc(np.argmin(bar1, axis=1), enc1.n_models))
        bar2, _ = conditional_model_cost(
            DistortionTensor(evaluator.values), source, enc1.assoc, weights.lambda2, enc2, side=2
        )
        enc2 = enc2.with_assoc(one_hot_assoc(np.argmin(bar2, axis=1), enc2.n_models))

        enc1, enc2 = optimize_models(enc1, enc2, evaluator, weights, config)

        j_now = _snapshot(source, enc1, enc2, evaluator, weights, 0.0, hard=True).lagrangian
        if not np.isfinite(j_now):
            raise NumericAbortError("Lagrangian became non-finite in the hard phase", {})
        report.zero_t_iters = it + 1
        if j_prev is not None and abs(j_now - j_prev) <= config.inner_tol * abs(j_now):
            break
        j_prev = j_now
    return enc1, enc2, decoder, evaluator, grid
