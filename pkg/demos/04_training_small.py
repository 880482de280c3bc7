"""A minute-scale training run showing the loop and the metric log.

Run with: python3 demos/04_training_small.py
"""

from fastei import config as cfgmod
from fastei import data, trainers

cfg = cfgmod.from_dict({
    "data": {"source": "shepp_logan_variants", "size": 32,
             "train_ids": [1, 2, 3], "test_ids": [11, 12]},
    "physics": {"kind": "radon", "num_angles": 15},
    "model": {"arch": "small_cnn", "channels": 8},
    "trainer": {"kind": "fei"},
    "optim": {"epochs": 40},
    "run": {"torch_threads": 1},
})

ds = data.load_dataset(cfg.data.source, cfg.data.size,
                       {"split": "train", "train_ids": cfg.data.train_ids,
                        "test_ids": cfg.data.test_ids})
print(f"training fei on {len(ds)} samples of {ds.image_shape} for {cfg.optim.epochs} epochs")

state, log = trainers.run_training(cfg, ds)

print(f"{'step':>5} {'epoch':>5} {'loss_total':>12} {'psnr_train':>10}")
for row in log.rows[:: len(ds) * 8]:
    print(f"{row['step']:5d} {row['epoch']:5d} {row['loss_total']:12.4f} "
          f"{row['psnr_train']:10.2f}")
last = log.rows[-1]
print(f"{last['step']:5d} {last['epoch']:5d} {last['loss_total']:12.4f} "
      f"{last['psnr_train']:10.2f}")
print(f"training wall time: {last['wall_time_s']:.1f} s "
      f"(metric computation excluded)")
