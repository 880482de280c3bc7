"""Forward operators: sinograms, filtered back-projection, adjoint checks.

Run with: python3 demos/01_operators.py
"""

import numpy as np

from fastei import data, linops, metrics

n = 128
ds = data.load_dataset("shepp_logan", n, {"split": "train", "train_ids": [1], "test_ids": [2]})
x = ds.images[0]

op = linops.make_radon_operator(n, num_angles=50)
print(f"radon operator: {op.in_shape} -> {op.out_shape}")
print(f"detector bins for n={n}: {linops.detector_count(n)}")

y = op.apply(x)
print(f"sinogram range: [{y.min():.3f}, {y.max():.3f}]")

# FBP is the pseudo-inverse role for tomography
fbp = op.pinv(y)
print(f"FBP PSNR on noiseless data: {metrics.psnr(x, fbp):.2f} dB")

# fewer angles degrade it
for k in (50, 25, 10):
    opk = linops.make_radon_operator(n, num_angles=k)
    rec = opk.pinv(opk.apply(x))
    print(f"  {k:3d} angles -> FBP {metrics.psnr(x, rec):.2f} dB")

# the adjoint identity <Ax, y> == <x, A^T y> on random probes
err = linops.adjoint_mismatch(op, seed=0, trials=5)
print(f"adjoint mismatch over 5 probes: {err:.2e}")

# spectral normalization keeps ||A|| near 1 so one set of step sizes works
print(f"operator norm (normalized): {linops.operator_norm(op):.3f}")

# noisy measurement model
model = linops.MeasurementModel(operator=op, noise_std=0.01)
y_noisy = linops.measure(model, x, seed=7)
print(f"noise std 0.01 -> FBP {metrics.psnr(x, op.pinv(y_noisy)):.2f} dB")
