"""Configuration, metrics, Monte-Carlo validation, artifact I/O, and the CLI."""

import json
import math

import numpy as np
import pytest

from damap import cli, numerics as nx, reportio, runner
from damap.codebook import DecoderTable
from damap.config import default_config, load_config, parse_number_list
from damap.errors import ConfigurationError
from damap.montecarlo import gaussian_cell_variance, monte_carlo_validate
from damap.numerics import OutputGrid

FAST_OVERRIDES = [
    "source.rho=0.9",
    "grids.n_source=32",
    "grids.n_noise=7",
    "grids.n_output=48",
    "method.name=greedy",
    "greedy.max_sweeps=15",
    "greedy.golden_iters=15",
    "run.mc_samples=20000",
    "weights.lambda=0.05",
    "run.figures=false",
]


class TestConfig:
    def test_defaults_validate(self):
        default_config().validate()

    def test_file_and_override_precedence(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[source]\nrho = 0.5\n[weights]\nlambda = 0.2\n")
        cfg = load_config(path, ["source.rho=0.25"])
        assert cfg.get("source", "rho") == 0.25       # CLI wins over file
        assert cfg.get("weights", "lambda") == 0.2    # file wins over default

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[source]\nrh = 0.5\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[sauce]\nrho = 0.5\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigurationError):
            load_config(None, ["grids.n_source=abc"])

    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            load_config(None, ["weights.mode=both"])

    def test_optional_float_empty_means_none(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[da]\nt_init =\n")
        cfg = load_config(path)
        assert cfg.get("da", "t_init") is None

    def test_bool_coercion(self):
        cfg = load_config(None, ["run.figures=false", "da.polish=TRUE"])
        assert cfg.get("run", "figures") is False
        assert cfg.get("da", "polish") is True

    def test_number_list_parsing(self):
        assert parse_number_list("0.1, 0.2 0.3", "x") == [0.1, 0.2, 0.3]
        assert parse_number_list("", "x") == []
        with pytest.raises(ConfigurationError):
            parse_number_list("a,b", "x")


class TestMetrics:
    def test_snr_example(self):
        assert runner.snr_db(0.02) == pytest.approx(16.9897, abs=5e-3)

    def test_csnr_example(self):
        # powers 3.36 + 5.57 over noise variance 0.1
        assert runner.csnr_db(3.36 + 5.57, 0.1) == pytest.approx(19.5086, abs=5e-3)


def linear_decoder_table(span, n, gain):
    y = np.linspace(-span, span, n)
    grid = OutputGrid(y, y.copy())
    return DecoderTable(
        grid=grid,
        xhat1=np.tile((gain * y)[:, None], (1, n)),
        xhat2=np.tile((gain * y)[None, :], (n, 1)),
    )


class TestMonteCarlo:
    def test_identity_system_matches_closed_form(self):
        # Independent unit-variance sources, identity encoders on a fine
        # grid (fine enough that nearest-node quantization is negligible),
        # exact scalar-Wiener decoder injected.
        n = 512
        grid = np.linspace(-5, 5, n)
        table = linear_decoder_table(6.5, 256, 1.0 / 1.1)
        mc = monte_carlo_validate(
            grid, grid.copy(), grid, grid.copy(), table,
            rho=0.0, var1=1.0, var2=1.0, noise_var=0.1, n_samples=1_000_000, seed=9,
        )
        oracle = 2.0 * 0.1 / 1.1
        assert abs(mc.distortion - oracle) <= 3.0 * mc.stderr

    def test_node_referenced_estimator_matches_at_coarse_grid(self):
        # At a coarse grid the raw estimator carries the quantization floor,
        # while the node-referenced one still matches the closed form.
        n = 64
        grid = np.linspace(-5, 5, n)
        table = linear_decoder_table(6.5, 256, 1.0 / 1.1)
        mc = monte_carlo_validate(
            grid, grid.copy(), grid, grid.copy(), table,
            rho=0.0, var1=1.0, var2=1.0, noise_var=0.1, n_samples=1_000_000, seed=10,
        )
        oracle = 2.0 * 0.1 / 1.1
        # the raw gap is explained by the closed-form floor, within a few
        # stderr plus the decoder-correlated remainder
        assert mc.distortion - mc.distortion_node > 0.5 * mc.quantization_floor
        assert abs(mc.distortion_node - oracle) <= 4.0 * mc.stderr_node

    def test_zero_system_distortion_is_total_variance(self):
        n = 64
        grid = np.linspace(-5, 5, n)
        values = np.zeros(n)
        table = linear_decoder_table(2.0, 32, 0.0)
        mc = monte_carlo_validate(
            values, values, grid, grid, table,
            rho=0.0, var1=1.0, var2=1.0, noise_var=0.1, n_samples=200_000, seed=3,
        )
        assert abs(mc.distortion - 2.0) <= 3.0 * mc.stderr
        assert mc.power1 == 0.0 and mc.power2 == 0.0

    def test_seed_determinism(self):
        n = 64
        grid = np.linspace(-5, 5, n)
        table = linear_decoder_table(6.5, 64, 0.9)
        a = monte_carlo_validate(grid, grid, grid, grid, table, 0.5, 1, 1, 0.1, 50_000, 7)
        b = monte_carlo_validate(grid, grid, grid, grid, table, 0.5, 1, 1, 0.1, 50_000, 7)
        assert a == b

    def test_rejects_empty_sample_budget(self):
        grid = np.linspace(-5, 5, 16)
        table = linear_decoder_table(2.0, 32, 0.5)
        with pytest.raises(ValueError):
            monte_carlo_validate(grid, grid, grid, grid, table, 0.0, 1, 1, 0.1, 0, 1)

    def test_cell_variance_closed_form(self):
        grid = np.linspace(-5, 5, 64)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(2_000_000)
        h = grid[1] - grid[0]
        idx = np.clip(np.rint((x - grid[0]) / h).astype(int), 0, 63)
        empirical = np.mean((x - grid[idx]) ** 2)
        assert gaussian_cell_variance(grid, 1.0) == pytest.approx(empirical, rel=2e-3)


@pytest.fixture(scope="module")
def fast_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fastrun")
    cfg = load_config(None, FAST_OVERRIDES + ["run.seed=3", f"run.out_dir={out}"])
    result = runner.run(cfg)
    return cfg, result, out


class TestRun:
    def test_summary_schema(self, fast_run):
        _, result, out = fast_run
        payload = json.loads((out / "summary.json").read_text())
        for key in ("method", "lambda1", "lambda2", "D", "P1", "P2", "J", "SNR_dB", "CSNR_dB"):
            assert key in payload
            if isinstance(payload[key], float):
                assert math.isfinite(payload[key])
        assert payload["method"] == "greedy"
        assert "monte_carlo" in payload

    def test_metric_identities(self, fast_run):
        _, result, _ = fast_run
        assert result.snr_db == pytest.approx(10 * math.log10(1 / result.distortion), abs=1e-12)
        assert result.csnr_db == pytest.approx(
            10 * math.log10((result.power1 + result.power2) / 0.1), abs=1e-12
        )

    def test_mapping_round_trip(self, fast_run):
        _, result, out = fast_run
        loaded = reportio.load_mapping(out / "mapping.json")
        assert np.abs(loaded["values"][0] - result.values1).max() < 1e-12
        assert np.abs(loaded["values"][1] - result.values2).max() < 1e-12
        assert np.abs(loaded["decoder"].xhat1 - result.decoder.xhat1).max() < 1e-12

    def test_mapping_csv_rows(self, fast_run):
        cfg, _, out = fast_run
        rows = reportio.read_csv_rows(out / "mapping.csv")
        assert len(rows) == cfg.get("grids", "n_source")
        parsed = np.array([[float(r["x"]), float(r["g1"]), float(r["g2"])] for r in rows])
        assert np.isfinite(parsed).all()

    def test_csv_full_precision_round_trip(self, fast_run):
        _, result, out = fast_run
        rows = reportio.read_csv_rows(out / "mapping.csv")
        g1 = np.array([float(r["g1"]) for r in rows])
        assert np.array_equal(g1, result.values1)

    def test_determinism_across_runs(self, fast_run, tmp_path):
        cfg, _, out = fast_run
        clone = load_config(None, FAST_OVERRIDES + ["run.seed=3", f"run.out_dir={tmp_path}"])
        runner.run(clone)
        first = json.loads((out / "summary.json").read_text())
        second = json.loads((tmp_path / "summary.json").read_text())
        first.pop("mapping"), first.pop("anneal_telemetry"), first.pop("config")
        second.pop("mapping"), second.pop("anneal_telemetry"), second.pop("config")
        assert first == second

    def test_linear_encoder_csv_is_affine(self, tmp_path):
        overrides = FAST_OVERRIDES + [
            "greedy.max_sweeps=0",
            "run.mc_samples=0",
            f"run.out_dir={tmp_path}",
        ]
        cfg = load_config(None, overrides)
        runner.run(cfg)
        rows = reportio.read_csv_rows(tmp_path / "mapping.csv")
        x = np.array([float(r["x"]) for r in rows])
        g = np.array([float(r["g1"]) for r in rows])
        slope = (g[-1] - g[0]) / (x[-1] - x[0])
        assert np.abs(g - (g[0] + slope * (x - x[0]))).max() < 1e-12


class TestSweep:
    def test_requires_exactly_one_point_list(self):
        cfg = load_config(None, FAST_OVERRIDES)
        with pytest.raises(ConfigurationError):
            runner.sweep(cfg)

    def test_lambda_sweep_rows_and_files(self, tmp_path):
        cfg = load_config(
            None,
            FAST_OVERRIDES
            + ["sweep.lambdas=0.2 0.02", "run.mc_samples=0", f"run.out_dir={tmp_path}"],
        )
        rows = runner.sweep(cfg)
        assert len(rows) == 2
        stored = reportio.read_csv_rows(tmp_path / "sweep.csv")
        assert len(stored) == 2
        assert {r["method"] for r in stored} == {"greedy"}
        # economic monotonicity: larger multiplier, no more power
        assert rows[0]["P1"] + rows[0]["P2"] <= (rows[1]["P1"] + rows[1]["P2"]) * 1.01

    def test_single_point_matches_plain_run(self, tmp_path):
        overrides = FAST_OVERRIDES + ["run.mc_samples=0"]
        cfg = load_config(
            None, overrides + ["sweep.lambdas=0.05", f"run.out_dir={tmp_path / 'sweep'}"]
        )
        rows = runner.sweep(cfg)
        solo = load_config(None, overrides + [f"run.out_dir={tmp_path / 'solo'}", "run.seed=0"])
        result = runner.run(solo)
        assert rows[0]["SNR_dB"] == pytest.approx(result.snr_db, abs=1e-12)

    def test_power_target_bisection(self, tmp_path):
        cfg = load_config(
            None,
            FAST_OVERRIDES
            + [
                "sweep.power_targets=2.0",
                "run.mc_samples=0",
                "weights.power_tol=0.02",
                f"run.out_dir={tmp_path}",
            ],
        )
        rows = runner.sweep(cfg)
        assert rows[0]["converged"]
        assert abs(rows[0]["P1"] + rows[0]["P2"] - 2.0) <= 0.02 * 2.0 + 1e-9

    def test_failed_bisection_flagged_not_dropped(self, tmp_path):
        cfg = load_config(
            None,
            FAST_OVERRIDES
            + [
                "sweep.power_targets=50.0",   # outside the multiplier bracket
                "run.mc_samples=0",
                "weights.bisect_iters=3",
                "weights.lambda_lo=0.04",
                "weights.lambda_hi=0.05",
                f"run.out_dir={tmp_path}",
            ],
        )
        rows = runner.sweep(cfg)
        assert len(rows) == 1
        assert not rows[0]["converged"]
        stored = reportio.read_csv_rows(tmp_path / "sweep.csv")
        assert stored[0]["converged"] == "False"


class TestCli:
    def test_run_exit_zero_and_artifacts(self, tmp_path, capsys):
        rc = cli.main(
            ["run", "--out", str(tmp_path), "--seed", "3", "--method", "greedy"]
            + [f"--set={o}" for o in FAST_OVERRIDES if not o.startswith("method")]
        )
        assert rc == 0
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "mapping.csv").exists()
        out = capsys.readouterr().out
        assert "SNR" in out

    def test_bad_config_exit_two(self, capsys):
        rc = cli.main(["run", "--set", "weights.mode=nonsense"])
        assert rc == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_file_exit_two(self, tmp_path):
        rc = cli.main(["run", "--config", str(tmp_path / "absent.ini")])
        assert rc == 2

    def test_numeric_abort_exit_three(self, tmp_path, capsys):
        # An infinite multiplier drives the Lagrangian non-finite, which the
        # greedy engine reports as a numeric abort.
        rc = cli.main(
            ["run", "--out", str(tmp_path), "--seed", "1"]
            + [f"--set={o}" for o in FAST_OVERRIDES]
            + ["--set", "weights.lambda=inf", "--set", "run.mc_samples=0"]
        )
        assert rc == 3
        assert "numeric abort" in capsys.readouterr().err

    def test_validate_and_dump_round_trip(self, tmp_path, capsys):
        run_dir = tmp_path / "run"
        rc = cli.main(
            ["run", "--out", str(run_dir), "--seed", "3"]
            + [f"--set={o}" for o in FAST_OVERRIDES]
        )
        assert rc == 0
        rc = cli.main(
            [
                "validate",
                "--mapping",
                str(run_dir / "mapping.json"),
                "--out",
                str(tmp_path / "val"),
                "--samples",
                "20000",
            ]
            + [f"--set={o}" for o in FAST_OVERRIDES]
        )
        assert rc == 0
        payload = json.loads((tmp_path / "val" / "validation.json").read_text())
        assert math.isfinite(payload["D_mc"])
        rc = cli.main(
            ["dump", "--mapping", str(run_dir / "mapping.json"), "--out", str(tmp_path / "dump")]
            + [f"--set={o}" for o in FAST_OVERRIDES]
        )
        assert rc == 0
        assert (tmp_path / "dump" / "mapping.csv").exists()

    def test_figures_rendered_when_enabled(self, tmp_path):
        overrides = [o for o in FAST_OVERRIDES if o != "run.figures=false"]
        rc = cli.main(
            ["run", "--out", str(tmp_path), "--seed", "3"]
            + [f"--set={o}" for o in overrides]
            + ["--set", "run.figures=true", "--set", "run.mc_samples=0"]
        )
        assert rc == 0
        assert (tmp_path / "mapping.png").exists()
        assert (tmp_path / "decoder.png").exists()
