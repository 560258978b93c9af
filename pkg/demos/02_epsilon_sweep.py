"""From the population density to the Hamilton-Jacobi phase.

For each mutation scale eps the direct solver evolves the full age-trait
density m_eps, and the HJ solver evolves the phase U_eps. As eps shrinks:
U_eps approaches the limit phase, the running integral of rho approaches
max_y U (the constraint), and the trait marginal concentrates at the argmax.
Coarse grids keep this to a few seconds.

    python demos/02_epsilon_sweep.py
"""

import numpy as np

from renewal_hj import load_scenario, sup_and_argmax
from renewal_hj.harness import Model, run_direct, run_hj, u_gap
from renewal_hj.direct import mass_fraction_outside

config = load_scenario("symmetric-gaussian").with_overrides(
    **{"grid.dy": 0.02, "grid.dy_limit": 0.01, "grid.dx": 0.05, "grid.n_birth": 200,
       "t_final": 0.5})
model = Model.build(config)
constants = model.validate().constants

_, limit = run_hj(model, 0.0, constants)
t = config.t_final
sup_lim, ybar, _ = sup_and_argmax(limit.frame_at(t).U, model.limit_trait)
print(f"limit phase at t = {t}: max U = {sup_lim:.4f} at y = {ybar[0]:+.3f}\n")

print("eps    |U_eps - U|   |int rho - max U_eps|   mass outside |y - ybar| > 0.3")
for eps in (0.2, 0.1, 0.05):
    _, hj = run_hj(model, eps, constants)
    ds, pop = run_direct(model, eps)
    f = pop.frame_at(t)
    gap_u = u_gap(model, hj, limit)
    gap_c = abs(f.rho_integral - sup_and_argmax(hj.frame_at(t).U, model.trait)[0])
    out = mass_fraction_outside(f.marginal, model.trait, ds.w_trait, ybar, 0.3)
    print(f"{eps:4.2f}   {gap_u:.4f}        {gap_c:.4f}                  {out:.4f}")

# The marginal at the smallest eps is already a narrow bump around ybar.
y = model.trait.axes[0]
mass = f.marginal / np.sum(f.marginal)
mean = float(np.sum(y * mass))
sd = float(np.sqrt(np.sum((y - mean) ** 2 * mass)))
print(f"\ntrait marginal at eps = 0.05: mean {mean:+.4f}, sd {sd:.4f}")
