"""Dev-time calibration: individual-lambda pairs -> (P1, P2) (lite config)."""
import json
import sys
import time

from damap import annealer as an
from damap import numerics as nx
from damap import objective as obj

LITE = dict(alpha=0.90, n_outputs=72, gd_steps=15, rng_seed=1)

def probe(l1, l2, n_source=48):
    src = nx.build_source_model(0.995, 1.0, 1.0, n_source, 5.0)
    noise = nx.build_noise_model(0.1, 9, 4.0)
    cfg = an.AnnealConfig(**LITE)
    t0 = time.time()
    res = an.anneal(cfg, src, (noise, noise), obj.LagrangeWeights(l1, l2),
                    power_target=(3.36, 5.57))
    return dict(l1=l1, l2=l2, P1=res.final.power1, P2=res.final.power2,
                D=res.final.distortion, secs=round(time.time()-t0, 1))

if __name__ == "__main__":
    args = [float(a) for a in sys.argv[1:]]
    for l1, l2 in zip(args[::2], args[1::2]):
        print(json.dumps(probe(l1, l2)), flush=True)
