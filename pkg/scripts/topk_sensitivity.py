"""Top-k agreement under the fragility attack for several k, to check that the
UNI vs IG-black ordering does not hinge on the chosen k fraction.

    python scripts/topk_sensitivity.py --samples 30
"""

import argparse

import numpy as np

from uniattr.config import ExperimentConfig
from uniattr.experiments import eval_data, method_fn, obtain_model, sample_seed
from uniattr.metrics import fragility_attack, topk_intersection
from uniattr.models import predict

FRACTIONS = (0.02, 0.05, 0.10, 0.20)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=30)
    ap.add_argument("--out", default="runs/topk")
    args = ap.parse_args()
    cfg = ExperimentConfig(out_dir=args.out)
    model = obtain_model(cfg)
    data = eval_data(cfg, n=args.samples)
    d = data.x[0].size
    table = {}
    for method in ("uni", "ig-black"):
        rows = []
        for i, x in enumerate(data.x):
            c = int(predict(model, x))
            seed = sample_seed(cfg.seed, i)
            res = fragility_attack(model, method_fn(model, method, c, cfg, seed), x, c,
                                   cfg.attack.eps_f, cfg.attack.n_steps, cfg.attack.spsa_samples, seed=seed)
            rows.append([topk_intersection(res.pre, res.post, max(1, round(f * d))) for f in FRACTIONS])
        table[method] = np.mean(rows, axis=0)
    print("| k fraction | " + " | ".join(table) + " |")
    print("|---" * (len(table) + 1) + "|")
    for j, f in enumerate(FRACTIONS):
        print(f"| {f:.2f} | " + " | ".join(f"{table[m][j]:.4f}" for m in table) + " |")


if __name__ == "__main__":
    main()
