"""Train the small CNN and run every study: metrics, attack, Riemann steps, bias showcase.

    python scripts/desk_study.py --out runs/desk --seed 0 [--quick]
"""

import argparse
import dataclasses
import logging

from uniattr.config import AttackSpec, ExperimentConfig, RiemannSpec
from uniattr.demo import bias_showcase, demo_gmm, write_demo
from uniattr.experiments import run_attack, run_attribute, run_evaluate, run_riemann_study, run_train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="20 samples per study")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig(out_dir=args.out, seed=args.seed)
    if args.quick:
        cfg = dataclasses.replace(cfg, n_samples=20, attack=AttackSpec(n_samples=20),
                                  riemann=RiemannSpec(n_samples=5))
    run_train(cfg)
    run_attribute(cfg)
    run_evaluate(cfg)
    run_attack(dataclasses.replace(cfg, methods=("uni", "ig-black")))
    run_riemann_study(cfg)
    bias_showcase(cfg)
    write_demo(demo_gmm(cfg), cfg.output_dir() / "gmm_demo")
    for name in ("metrics.md", "attack.md"):
        print(f"\n## {name}\n")
        print((cfg.output_dir() / name).read_text())


if __name__ == "__main__":
    main()
