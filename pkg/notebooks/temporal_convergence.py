# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Temporal convergence
#
# The MS1 solution is linear in space, so on any mesh the spatial error
# vanishes and what remains is the time-stepping error. We run both schemes
# over a halving sequence of steps and fit log-log slopes.

# %%
from vemmhd.harness import ConvergencePlan, RunSpec, convergence_study

N = 2  # the acceptance suite uses 4; 2 keeps this notebook quick
DTS = (0.2, 0.1, 0.05, 0.025, 0.0125)

# %%
for order in (1, 2):
    plan = ConvergencePlan("temporal", RunSpec(n=N, case="ms1", order=order), sizes=(N,), dts=DTS)
    reports, slopes = convergence_study(plan)
    print(f"order {order}")
    print(f"{'dt':>8} {'e_u':>10} {'e_J':>10} {'e_s':>10}")
    for r in reports:
        print(f"{r.dt:8.4f} {r.e_u:10.3e} {r.e_J:10.3e} {r.e_s:10.3e}")
    print("slopes", {k: round(v, 3) for k, v in slopes.items() if k in ("e_u", "e_J", "e_s")})

# %% [markdown]
# The second-order scheme starts with one backward Euler step. Its local
# error is O(dt^2), so it does not spoil the global order.
