"""State evolution: the deterministic shadow of AMP.

Prints the spiked gamma-recursion and its fixed point, the overlap it
predicts, and the linear-model error recursion with its contraction
certificate.
"""

import numpy as np

import stoloc as sl

prior = sl.Prior.discrete([-1.0, 1.0], [0.5, 0.5])
beta = 2.0

tr = sl.run_se_spiked(prior, beta, 0.0, 8, with_phi=True)
print(f"spiked model, beta = {beta}:")
print("  k    gamma^k     onsager b^k   1 - mmse(gamma^k)")
for k, (g, b) in enumerate(zip(tr.gammas, tr.onsager)):
    print(f"  {k}   {g:9.5f}   {b:11.5f}   {1 - sl.mmse(prior, g):.5f}")
print(f"  fixed point gamma* = {tr.gamma_star:.6f}, "
      f"q = 1 - mmse(gamma*) = {tr.q:.6f}")
print(f"  potential at the fixed point: {tr.phi_at_fixed_points[0][1]:.6f}")

scan = sl.fixed_point_scan(
    lambda g: sl.phi_spiked(prior, g, beta, 0.0),
    np.linspace(0.5, 20.0, 300))
print(f"  potential scan: minimizers near {np.round(scan.minimizers, 3)}, "
      f"first stationary point is the global minimum: "
      f"{scan.first_stationary_is_global_min}")

three = sl.Prior.discrete([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25],
                          normalize=True)
ltr = sl.run_se_linear(three, 20.0, 0.25, 0.0, 10)
print("\nlinear model, delta = 20, sigma^2 = 0.25:")
print("  k      E_k          |E_k - E*| * 2^(k+1) / |1 - E*|")
for k in range(6):
    ratio = abs(ltr.Es[k + 1] - ltr.E_star) * 2 ** (k + 1) \
        / abs(1 - ltr.E_star)
    print(f"  {k}   {ltr.Es[k + 1]:.3e}    {ratio:.3e}  (<= 1: contraction)")
print(f"  fixed point E* = {ltr.E_star:.3e}")
