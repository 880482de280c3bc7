"""Inner solvers: NAG against the closed-form minimizer, PnP fixed points.

Run with: python3 demos/03_inner_solvers.py
"""

import numpy as np

from fastei import denoisers, linops, solvers

rng = np.random.default_rng(0)

# a random well-scaled dense instance
m, n = 12, 20
M = rng.normal(size=(m, n))
M /= np.linalg.norm(M, 2)
op = linops.make_dense_operator(M)
y = rng.normal(size=m)
anchor = rng.normal(size=n)

problem = solvers.QuadraticSubproblem(operator=op, y=y, anchor=anchor, lambda_=1.0)
u_star = solvers.solve_quadratic_exact(problem)
print(f"exact minimizer norm: {np.linalg.norm(u_star):.4f}")

# NAG closes the gap geometrically; a handful of iterations is already close
errors = []
u, v = np.array(anchor), None
for J in (1, 5, 10, 50, 200):
    u_j, _ = solvers.nag_minimize(problem.gradient, J, anchor, beta=0.1, eta=0.5)
    rel = np.linalg.norm(u_j - u_star) / np.linalg.norm(u_star)
    print(f"  J={J:4d}: relative error {rel:.2e}")

# J=0 is a pass-through: the anchor comes back untouched
u0, _ = solvers.nag_minimize(problem.gradient, 0, anchor)
print(f"J=0 returns the start point: {np.array_equal(u0, anchor)}")

# the PnP step with the identity denoiser has the exact solution as its
# fixed point: iterate it and watch the distance fall
d = denoisers.get_denoiser("identity", 1.0)
L = np.zeros(n)
u = np.array(anchor)
for k in range(2000):
    u = solvers.pnp_latent_step(u, problem, L, 0.35, d)
rel = np.linalg.norm(u - u_star) / np.linalg.norm(u_star)
print(f"PnP(identity) after 2000 steps: relative error {rel:.2e}")

# the multiplier update is plain arithmetic: L+ = L - u + G(y)
L2 = solvers.update_multiplier(np.ones(3), np.full(3, 2.0), np.zeros(3))
print(f"update_multiplier([1,1,1], [2,2,2], [0,0,0]) = {L2}")
