"""The dominant trait as an ODE.

In the asymmetric-well scenario the phase starts peaked at y = 0 while the
growth optimum sits at y = 0.5. While U stays strictly concave, its argmax
ybar(t) follows the canonical equation: a gradient climb on -Lambda(., 1)
preconditioned by the inverse Hessian of U. This demo integrates that ODE and
checks it against the argmax of the limit HJ solution.

    python demos/03_canonical_equation.py
"""

import numpy as np

from renewal_hj import compare_routes, integrate_canonical, load_scenario, sup_and_argmax
from renewal_hj.harness import Model, run_hj

config = load_scenario("asymmetric-well").with_overrides(
    **{"grid.dy_limit": 0.005, "t_final": 0.5})
model = Model.build(config)
constants = model.validate().constants

hj_solver, limit = run_hj(model, 0.0, constants, frame_dt=config.dynamics["frame_dt"])
traj = integrate_canonical(limit, hj_solver.eigen, model.kernel, dt=config.dynamics["dt"])
print(f"integrated to t = {traj.halt_time:.3f}" + (f" ({traj.halt_reason})" if traj.halt_reason else ""))

print("\nt      ybar (ODE)   argmax U     rho = -Lambda(ybar,1)")
for t in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
    y_ode = traj.at(t)[0]
    rho = float(np.interp(t, traj.times, traj.rho))
    _, y_hj, _ = sup_and_argmax(limit.frame_at(t).U, model.limit_trait)
    print(f"{t:4.2f}   {y_ode:+.5f}     {y_hj[0]:+.5f}     {rho:.6f}")

rep = compare_routes(traj, limit, hj_solver.eigen)
print(f"\nmax |ybar - argmax U|  = {np.max(rep.argmax_gap):.2e}  (grid step {config.grid['dy_limit']})")
print(f"rho nondecreasing      : violation {rep.rho_monotone_violation:.1e}")
print(f"Lambda(ybar,1) falling : violation {rep.lambda_monotone_violation:.1e}")
