"""Experiment orchestration: single runs, multiplier/power sweeps, metrics.

A run builds the discretized problem from an ExperimentConfig, executes the
configured method (deterministic annealing, greedy descent, or noisy
channel relaxation), validates the result by Monte-Carlo simulation, and
writes the artifact set: ``summary.json``, ``mapping.json``/``mapping.csv``,
``anneal.csv`` (annealing only), and figures when enabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, plots, reportio
from .annealer import AnnealConfig, AnnealResult, anneal
from .config import ExperimentConfig, parse_number_list
from .errors import ConfigurationError
from .montecarlo import MonteCarloResult, monte_carlo_validate
from .numerics import build_noise_model, build_source_model
from .objective import LagrangeWeights


@dataclass(frozen=True)
class RunResult:
    method: str
    lambda1: float
    lambda2: float
    distortion: float
    power1: float
    power2: float
    lagrangian: float
    snr_db: float
    csnr_db: float
    mc: MonteCarloResult | None
    mapping_path: str | None
    anneal_path: str | None
    power_search_converged: bool = True
    annealing: AnnealResult | None = field(default=None, repr=False)
    greedy: baselines.GreedyResult | None = field(default=None, repr=False)
    values1: np.ndarray = field(default=None, repr=False)
    values2: np.ndarray = field(default=None, repr=False)
    decoder: object = field(default=None, repr=False)


def snr_db(distortion: float) -> float:
    return 10.0 * math.log10(1.0 / distortion)


def csnr_db(total_power: float, noise_var: float) -> float:
    return 10.0 * math.log10(total_power / noise_var)


def slope_sign_changes(values, rel_tol: float = 0.02) -> int:
    """Sign alternations of the discrete slope, ignoring segments smaller
    than ``rel_tol`` of the output range.

    Zero means a monotone map; two or more means some output level is hit
    on disjoint source intervals (a many-to-one map).
    """
    values = np.asarray(values, float)
    steps = np.diff(values)
    span = float(np.ptp(values))
    if span == 0.0:
        return 0
    signs = np.sign(steps[np.abs(steps) > rel_tol * span])
    if len(signs) < 2:
        return 0
    return int(np.sum(signs[1:] != signs[:-1]))


def build_problem(config: ExperimentConfig):
    src = build_source_model(
        config.get("source", "rho"),
        config.get("source", "var1"),
        config.get("source", "var2"),
        config.get("grids", "n_source"),
        config.get("grids", "source_span"),
    )
    noise = build_noise_model(
        config.get("noise", "var"),
        config.get("grids", "n_noise"),
        config.get("grids", "noise_span"),
    )
    return src, (noise, noise)


def anneal_config(config: ExperimentConfig, seed: int) -> AnnealConfig:
    da = config["da"]
    return AnnealConfig(
        n_models_1=da["n_models_1"],
        n_models_2=da["n_models_2"],
        t_init=da["t_init"],
        t_min=da["t_min"],
        alpha=da["alpha"],
        perturb_eps=da["perturb_eps"],
        inner_tol=da["inner_tol"],
        inner_max_iters=da["inner_max_iters"],
        gd_step_init=da["gd_step_init"],
        gd_backtrack_factor=da["gd_backtrack_factor"],
        gd_max_iters=da["gd_max_iters"],
        gd_steps=da["gd_steps"],
        rng_seed=seed,
        merge_tol=da["merge_tol"],
        n_outputs=config.get("grids", "n_output"),
        grid_margin=config.get("grids", "output_margin"),
        grid_guard=da["grid_guard"],
        polish=da["polish"],
    )


def greedy_init(config: ExperimentConfig, source, noises, seed: int):
    slope = config.get("greedy", "init_slope")
    jitter = config.get("greedy", "init_jitter")
    rng = np.random.default_rng(seed)
    sigma_y = math.sqrt(slope**2 * source.var1 + noises[0].var)
    v1 = slope * source.x_grid_1 + jitter * sigma_y * rng.standard_normal(len(source.x_grid_1))
    v2 = slope * source.x_grid_2 + jitter * sigma_y * rng.standard_normal(len(source.x_grid_2))
    return v1, v2


def random_grid_init(source, noises, power_target: float, rng: np.random.Generator):
    """Random starting encoders for baseline restarts: a random slope plus
    node jitter, rescaled to the requested transmit power."""
    out = []
    for side in (1, 2):
        grid = source.x_grid(side)
        marginal = source.marginal(side)
        slope = rng.uniform(0.3, 1.8)
        values = slope * grid + 0.3 * rng.standard_normal(len(grid)) * math.sqrt(source.variance(side))
        power = float(np.dot(marginal, values**2))
        values *= math.sqrt(power_target / power)
        out.append(values)
    return out[0], out[1]


def execute_method(config: ExperimentConfig, source, noises, weights: LagrangeWeights, seed: int):
    """Run the configured method; returns (values1, values2, decoder, costs, extras)."""
    method = config.get("method", "name")
    if method == "da":
        power_target = _init_power_target(config)
        result = anneal(anneal_config(config, seed), source, noises, weights, power_target)
        return result.values1, result.values2, result.decoder, result.final, {"anneal": result}
    v1, v2 = greedy_init(config, source, noises, seed)
    greedy_kwargs = dict(
        tol=config.get("greedy", "tol"),
        max_sweeps=config.get("greedy", "max_sweeps"),
        n_candidates=config.get("greedy", "candidates"),
        span_factor=config.get("greedy", "span_factor"),
        golden_iters=config.get("greedy", "golden_iters"),
        n_outputs=config.get("grids", "n_output"),
        grid_margin=config.get("grids", "output_margin"),
    )
    if method == "greedy":
        result = baselines.greedy_descend(v1, v2, source, noises, weights, **greedy_kwargs)
    elif method == "ncr":
        ncr_cfg = baselines.NcrConfig(
            sigma2_start=config.get("ncr", "sigma2_start"),
            ncr_alpha=config.get("ncr", "ncr_alpha"),
            stages=config.get("ncr", "stages"),
        )
        result = baselines.ncr(ncr_cfg, source, noises, weights, (v1, v2), **greedy_kwargs)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return result.values1, result.values2, result.decoder, result.costs, {"greedy": result}


def _init_power_target(config: ExperimentConfig):
    mode = config.get("weights", "mode")
    if mode == "power_total":
        return 0.5 * config.get("weights", "power_target")
    if mode == "power_individual":
        return (config.get("weights", "power_target1"), config.get("weights", "power_target2"))
    return None


def resolve_weights(config: ExperimentConfig, source, noises, seed: int):
    """Weights for the run; power-target modes bisect the multipliers.

    Returns (weights, converged) where ``converged`` reports whether every
    bisection hit its tolerance.
    """
    mode = config.get("weights", "mode")
    if mode == "individual":
        return LagrangeWeights(config.get("weights", "lambda1"), config.get("weights", "lambda2")), True
    if mode == "total":
        return LagrangeWeights.total(config.get("weights", "lambda")), True
    if mode == "power_total":
        lam, ok = bisect_total_lambda(
            config,
            source,
            noises,
            config.get("weights", "power_target"),
            config.get("weights", "power_tol"),
            config.get("weights", "bisect_iters"),
            seed,
        )
        return LagrangeWeights.total(lam), ok
    lams, ok = bisect_individual_lambdas(
        config,
        source,
        noises,
        (config.get("weights", "power_target1"), config.get("weights", "power_target2")),
        config.get("weights", "power_tol_individual"),
        seed,
    )
    return LagrangeWeights(*lams), ok


def _powers_for(config, source, noises, weights, seed):
    v1, v2, _, costs, _ = execute_method(config, source, noises, weights, seed)
    return costs.power1, costs.power2


def bisect_total_lambda(config, source, noises, target, tol, max_iters, seed):
    """Log-scale bisection of the shared multiplier until the total power
    lands within ``tol`` (relative) of ``target``.  Power is non-increasing
    in the multiplier, so a sign change brackets the answer; bracket
    expansion counts against the same iteration budget."""
    lo = config.get("weights", "lambda_lo")
    hi = config.get("weights", "lambda_hi")
    iters = 0

    def total_power(lam):
        nonlocal iters
        iters += 1
        p1, p2 = _powers_for(config, source, noises, LagrangeWeights.total(lam), seed)
        return p1 + p2

    p_lo = total_power(lo)
    while p_lo < target and lo > 1e-12 and iters < max_iters:
        lo *= 0.1
        p_lo = total_power(lo)
    p_hi = total_power(hi)
    while p_hi > target and hi < 1e6 and iters < max_iters:
        hi *= 10.0
        p_hi = total_power(hi)

    best_lam, best_p = (lo, p_lo) if abs(p_lo - target) < abs(p_hi - target) else (hi, p_hi)
    while iters < max_iters:
        mid = math.sqrt(lo * hi)
        p_mid = total_power(mid)
        if abs(p_mid - target) < abs(best_p - target):
            best_lam, best_p = mid, p_mid
        if p_mid > target:
            lo = mid
        else:
            hi = mid
        if abs(best_p - target) <= tol * target:
            break
    return best_lam, abs(best_p - target) <= tol * target


def bisect_individual_lambdas(config, source, noises, targets, tol, seed):
    """Alternating per-channel log bisection toward individual power targets."""
    rounds = config.get("weights", "bisect_rounds")
    max_iters = config.get("weights", "bisect_iters")
    lams = [config.get("weights", "lambda1"), config.get("weights", "lambda2")]

    def powers(l1, l2):
        return _powers_for(config, source, noises, LagrangeWeights(l1, l2), seed)

    ok = False
    for _ in range(rounds):
        for side in (0, 1):
            lo = config.get("weights", "lambda_lo")
            hi = config.get("weights", "lambda_hi")
            target = targets[side]
            for _ in range(max_iters // (2 * rounds) + 1):
                mid = math.sqrt(lo * hi)
                trial = list(lams)
                trial[side] = mid
                p = powers(*trial)[side]
                if p > target:
                    lo = mid
                else:
                    hi = mid
                lams[side] = mid
                if abs(p - target) <= tol * target:
                    break
        p1, p2 = powers(*lams)
        ok = abs(p1 - targets[0]) <= tol * targets[0] and abs(p2 - targets[1]) <= tol * targets[1]
        if ok:
            break
    return tuple(lams), ok


def run(config: ExperimentConfig, out_dir=None) -> RunResult:
    """Execute one configured experiment and write its artifact set."""
    config.validate()
    source, noises = build_problem(config)
    seed = config.get("run", "seed")
    out = Path(out_dir if out_dir is not None else config.get("run", "out_dir"))

    weights, power_ok = resolve_weights(config, source, noises, seed)
    values1, values2, decoder, costs, extras = execute_method(config, source, noises, weights, seed)

    mc = None
    n_mc = config.get("run", "mc_samples")
    if n_mc > 0:
        mc = monte_carlo_validate(
            values1,
            values2,
            source.x_grid_1,
            source.x_grid_2,
            decoder,
            source.rho,
            source.var1,
            source.var2,
            noises[0].var,
            n_mc,
            seed + 977,
        )

    annealing = extras.get("anneal")
    mapping_path = out / "mapping.json"
    payload = reportio.mapping_payload(
        values1,
        values2,
        decoder,
        encoder1=annealing.encoder1 if annealing else None,
        encoder2=annealing.encoder2 if annealing else None,
        x_grid_1=source.x_grid_1,
        x_grid_2=source.x_grid_2,
    )
    reportio.write_mapping(mapping_path, out / "mapping.csv", payload)
    anneal_path = None
    if annealing is not None:
        anneal_path = out / "anneal.csv"
        reportio.write_anneal_csv(anneal_path, annealing.report)

    result = RunResult(
        method=config.get("method", "name"),
        lambda1=weights.lambda1,
        lambda2=weights.lambda2,
        distortion=costs.distortion,
        power1=costs.power1,
        power2=costs.power2,
        lagrangian=costs.lagrangian,
        snr_db=snr_db(costs.distortion),
        csnr_db=csnr_db(costs.power1 + costs.power2, noises[0].var),
        mc=mc,
        mapping_path=str(mapping_path),
        anneal_path=str(anneal_path) if anneal_path else None,
        power_search_converged=power_ok,
        annealing=annealing,
        greedy=extras.get("greedy"),
        values1=values1,
        values2=values2,
        decoder=decoder,
    )
    reportio.write_json(out / "summary.json", summary_payload(config, result))
    if config.get("run", "figures"):
        plots.render_mapping(payload, out / "mapping.png")
        plots.render_decoder(payload, out / "decoder.png")
        if anneal_path is not None:
            plots.render_anneal(reportio.read_csv_rows(anneal_path), out / "anneal.png")
    return result


def summary_payload(config: ExperimentConfig, result: RunResult) -> dict:
    payload = {
        "method": result.method,
        "lambda1": result.lambda1,
        "lambda2": result.lambda2,
        "D": result.distortion,
        "P1": result.power1,
        "P2": result.power2,
        "J": result.lagrangian,
        "SNR_dB": result.snr_db,
        "CSNR_dB": result.csnr_db,
        "power_search_converged": result.power_search_converged,
        "slope_sign_changes": [
            slope_sign_changes(result.values1),
            slope_sign_changes(result.values2),
        ],
        "mapping": result.mapping_path,
        "anneal_telemetry": result.anneal_path,
        "config": config.as_flat_dict(),
    }
    if result.mc is not None:
        payload["monte_carlo"] = {
            "D_mc": result.mc.distortion,
            "stderr": result.mc.stderr,
            "D_mc_node": result.mc.distortion_node,
            "stderr_node": result.mc.stderr_node,
            "P1_mc": result.mc.power1,
            "P2_mc": result.mc.power2,
            "P1_stderr": result.mc.power1_stderr,
            "P2_stderr": result.mc.power2_stderr,
            "n_samples": result.mc.n_samples,
            "quantization_floor": result.mc.quantization_floor,
            "grid_agreement_node_3se": bool(
                abs(result.distortion - result.mc.distortion_node) <= 3.0 * result.mc.stderr_node
            ),
            "grid_agreement_raw_3se": bool(
                abs(result.distortion - result.mc.distortion) <= 3.0 * result.mc.stderr
            ),
        }
    if result.annealing is not None:
        report = result.annealing.report
        payload["annealing"] = {
            "temperatures": len(report.records),
            "t_init": report.t_init,
            "t_min": report.t_min,
            "critical_temperatures": report.critical_temperatures,
            "grid_rebuilds": report.grid_rebuilds,
            "polish_sweeps": report.polish_sweeps,
            "final_clusters": [report.records[-1].clusters1, report.records[-1].clusters2],
        }
    return payload


def sweep(config: ExperimentConfig, out_dir=None) -> list[dict]:
    """One run per configured sweep point; returns the curve-table rows.

    Points come either from ``sweep.lambdas`` (shared-multiplier runs) or
    ``sweep.power_targets`` (each bisected in total-power mode).  Per-point
    seeds derive from the base seed plus the point index.  A failed power
    bisection flags the row rather than dropping it.
    """
    config.validate()
    lambdas = parse_number_list(config.get("sweep", "lambdas"), "sweep.lambdas")
    targets = parse_number_list(config.get("sweep", "power_targets"), "sweep.power_targets")
    if bool(lambdas) == bool(targets):
        raise ConfigurationError("a sweep needs exactly one of sweep.lambdas or sweep.power_targets")
    out = Path(out_dir if out_dir is not None else config.get("run", "out_dir"))
    base_seed = config.get("run", "seed")

    rows = []
    points = lambdas if lambdas else targets
    for index, point in enumerate(points):
        sub = ExperimentConfig(values={s: dict(items) for s, items in config.values.items()})
        sub.values["run"]["seed"] = base_seed + index
        if lambdas:
            sub.values["weights"]["mode"] = "total"
            sub.values["weights"]["lambda"] = point
        else:
            sub.values["weights"]["mode"] = "power_total"
            sub.values["weights"]["power_target"] = point
        result = run(sub, out / f"point_{index:02d}")
        rows.append(
            {
                "lambda1": result.lambda1,
                "lambda2": result.lambda2,
                "P1": result.power1,
                "P2": result.power2,
                "CSNR_dB": result.csnr_db,
                "SNR_dB": result.snr_db,
                "method": result.method,
                "converged": result.power_search_converged,
            }
        )
    reportio.write_sweep_csv(out / "sweep.csv", rows)
    if config.get("run", "figures"):
        plots.render_sweep(rows, out / "sweep.png")
    return rows
