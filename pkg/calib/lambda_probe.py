"""Dev-time calibration: DA total-power curve lambda -> P1+P2 (lite config)."""
import json
import sys
import time

from damap import annealer as an
from damap import numerics as nx
from damap import objective as obj

LITE = dict(alpha=0.90, n_outputs=72, gd_steps=15, rng_seed=1)

def probe(lam, n_source=48):
    src = nx.build_source_model(0.995, 1.0, 1.0, n_source, 5.0)
    noise = nx.build_noise_model(0.1, 9, 4.0)
    cfg = an.AnnealConfig(**LITE)
    t0 = time.time()
    res = an.anneal(cfg, src, (noise, noise), obj.LagrangeWeights.total(lam))
    return dict(lam=lam, P1=res.final.power1, P2=res.final.power2,
                D=res.final.distortion, J=res.final.lagrangian, secs=round(time.time()-t0, 1))

if __name__ == "__main__":
    for lam in [float(a) for a in sys.argv[1:]]:
        print(json.dumps(probe(lam)), flush=True)
