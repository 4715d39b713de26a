"""Precompute the acceptance suite's cached heavy runs (same code path)."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import test_acceptance as acc
from damap import numerics as nx

source = nx.build_source_model(0.995, 1.0, 1.0, acc.N_SOURCE, 5.0)
noise = nx.build_noise_model(0.1, acc.N_NOISE, 4.0)
problem = (source, (noise, noise))


class _Fx:
    """Run the fixture functions directly."""


for name in ("da_runs", "greedy_batches", "fig4_individual", "fig4_total"):
    fn = getattr(acc, name).__wrapped__
    print(f"warming {name} ...", flush=True)
    value = fn(problem)
    if name == "da_runs":
        for lam, (res, secs) in value.items():
            print(f"  da lambda={lam}: J={res.final.lagrangian:.6f} "
                  f"P={res.final.power1 + res.final.power2:.3f} {secs/60:.1f} min", flush=True)
    elif name == "greedy_batches":
        for lam, res in value.items():
            print(f"  greedy lambda={lam}: best J={res.lagrangian:.6f} "
                  f"P={res.costs.power1 + res.costs.power2:.3f}", flush=True)
    else:
        res, lams = value
        print(f"  {name}: lam={lams} P1={res.final.power1:.3f} P2={res.final.power2:.3f}", flush=True)
print("done", flush=True)
