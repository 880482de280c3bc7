"""Compare trainers under identical conditions at toy scale.

The shipped ct_desk.toml is the honest version of this comparison; this
script shrinks everything so it finishes in about a minute.

Run with: python3 demos/05_method_comparison.py
"""

import numpy as np

from fastei import config as cfgmod
from fastei import data, trainers

BASE = {
    "data": {"source": "shepp_logan_variants", "size": 32,
             "train_ids": [1, 2, 3, 4], "test_ids": [11, 12]},
    "physics": {"kind": "radon", "num_angles": 12},
    "model": {"arch": "small_cnn", "channels": 8},
    "optim": {"epochs": 60},
    "denoiser": {"name": "median"},
    "run": {"torch_threads": 1},
}

results = {}
for kind in ("mc", "ei", "fei", "pnp_fei"):
    raw = {k: dict(v) for k, v in BASE.items()}
    raw["trainer"] = {"kind": kind}
    cfg = cfgmod.from_dict(raw)
    ds = data.load_dataset(cfg.data.source, cfg.data.size,
                           {"split": "train", "train_ids": cfg.data.train_ids,
                            "test_ids": cfg.data.test_ids})
    state, log = trainers.run_training(cfg, ds)
    curve = log.column("psnr_train")
    final = float(np.mean(curve[-len(ds):]))
    results[kind] = (curve, final)
    print(f"{kind:8s} final train PSNR {final:.2f} dB")

# iterations each method needs to reach the ei endpoint
threshold = results["ei"][1]
print(f"\niterations to reach the ei endpoint ({threshold:.2f} dB):")
for kind, (curve, final) in results.items():
    hit = next((i + 1 for i, v in enumerate(curve) if v >= threshold), None)
    label = f"{hit}" if hit else "not reached"
    print(f"  {kind:8s} {label}")
