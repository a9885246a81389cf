"""Source-city test MSE of the network against each baseline, per seed (synthetic data).

    python3 scripts/compare_source.py --seeds 0 1 2 3 4
"""

import argparse

from rainadapt import pipeline
from rainadapt.config import ExperimentConfig
from rainadapt.dataset import apply_scaler
from rainadapt.metrics import mse
from rainadapt.nn import init_mlp, train_source


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()
    print("seed," + ",".join(pipeline.SOURCE_METHODS) + ",dnn_over_best")
    for seed in args.seeds:
        cfg = ExperimentConfig(seed=seed)
        sp = pipeline.source_splits(cfg, pipeline.load_source(cfg, synthetic=True))
        scale = lambda d: apply_scaler(sp.scaler, d)
        train, test = scale(sp.train), scale(sp.test)
        scores = {k: mse(m.predict(test.features), test.targets)
                  for k, m in pipeline.fit_baselines(cfg, train).items()}
        net, _ = train_source(init_mlp(cfg.mlp_spec()), scale(sp.fit), scale(sp.val), cfg.train.build(seed))
        scores["DNN"] = mse(net.predict(test.features), test.targets)
        best = min(v for k, v in scores.items() if k != "DNN")
        row = ",".join(f"{scores[k]:.4f}" for k in pipeline.SOURCE_METHODS)
        print(f"{seed},{row},{scores['DNN'] / best:.3f}", flush=True)


if __name__ == "__main__":
    main()
