"""Run the full offline pipeline on synthetic data for several seeds.

    python3 scripts/synth_demo.py --seeds 0 1 2 --out runs/synth
"""

import argparse
import logging
from pathlib import Path

from rainadapt.config import ExperimentConfig, write_config
from rainadapt.pipeline import run_all


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", type=Path, default=Path("runs/synth"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for seed in args.seeds:
        out = args.out / f"seed{seed}"
        cfg = ExperimentConfig(seed=seed, output_dir=str(out), cache_dir=str(out / "cache"))
        out.mkdir(parents=True, exist_ok=True)
        write_config(out / "config.json", cfg)
        print(f"== seed {seed} ==")
        print(run_all(cfg, synthetic=True))


if __name__ == "__main__":
    main()
