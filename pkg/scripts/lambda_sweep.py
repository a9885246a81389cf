"""Before/after MAPE on one synthetic target across a grid of loss weights.

    python3 scripts/lambda_sweep.py --city Paris --weights 0:1 0.25:0.75 0.5:0.5 1:0
"""

import argparse
import dataclasses

from rainadapt.config import ExperimentConfig
from rainadapt.pipeline import synthetic_scores


def _pair(text):
    a, b = text.split(":")
    return float(a), float(b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--city", default="Paris")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--weights", type=_pair, nargs="+",
                    default=[(0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0)])
    args = ap.parse_args()
    base = ExperimentConfig(seed=args.seed)
    print("lambda1,lambda2,mape_before,mape_after")
    for l1, l2 in args.weights:
        cfg = base.with_overrides(adaptation=dataclasses.replace(base.adaptation, lambda1=l1, lambda2=l2))
        before, after = synthetic_scores(cfg, args.city)
        print(f"{l1},{l2},{before:.3f},{after:.3f}", flush=True)


if __name__ == "__main__":
    main()
