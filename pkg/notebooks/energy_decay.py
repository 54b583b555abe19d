# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Energy decay without loads
#
# Starting from MS2's initial velocity with zero loads and boundary data, the
# modified energy must not grow, whatever the step size. We print the
# energy trace for a huge step and check the per-step inequality for a
# range of steps.

# %%
from vemmhd.forms import build_discretization
from vemmhd.harness import decay_case
from vemmhd.mesh import build_cube_mesh
from vemmhd.stepper import SchemeConfig, build_systems, run

disc = build_discretization(build_cube_mesh(3), 1)

# %%
for order in (1, 2):
    res = run(build_systems(disc, SchemeConfig(T=1, dt=1.0, order=order)), decay_case())
    print(f"order {order}, dt = 1:", [f"{r.E:.6f}" for r in res.trace])

# %%
for order in (1, 2):
    for dt in (1.0, 0.1, 0.01):
        res = run(build_systems(disc, SchemeConfig(T=1, dt=dt, order=order)), decay_case())
        E0 = res.trace[0].E
        slack = max((r.dE / dt + r.dissipation) / E0 for r in res.trace[1:])
        print(f"order {order} dt {dt:5}: max (dE/dt + dissipation)/E0 = {slack:.2e}")
