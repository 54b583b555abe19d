# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Spatial convergence
#
# MS2 is smooth and non-polynomial. Tying the time step to the mesh size
# (dt = h for the second-order scheme, dt = h^2 for the first-order one)
# keeps the temporal error from masking the spatial rate.

# %%
from vemmhd.harness import ConvergencePlan, RunSpec, convergence_study

SIZES = (2, 3, 4)
KEYS = ("e_u", "e_J", "e_p", "e_phi")

# %%
for order in (2, 1):
    plan = ConvergencePlan("spatial", RunSpec(case="ms2", order=order), sizes=SIZES)
    reports, slopes = convergence_study(plan)
    print(f"order {order}")
    print(f"{'h':>8} {'dt':>8} " + " ".join(f"{k:>10}" for k in KEYS))
    for r in reports:
        print(f"{r.h:8.4f} {r.dt:8.4f} " + " ".join(f"{getattr(r, k):10.3e}" for k in KEYS))
    print("slopes", {k: round(slopes[k], 3) for k in KEYS})

# %% [markdown]
# Distorted prisms behave the same way; swap in `mesh_type="dtp"` on the
# base spec to check.
