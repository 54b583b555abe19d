# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Divergence of the discrete velocity and current
#
# Both fields are divergence-free cell by cell, up to round-off, on cubes and
# on distorted prisms, for every time step and both schemes.

# %%
from vemmhd.harness import RunSpec, divergence_table

specs = [RunSpec(mesh_type=m, n=2, case="ms1", order=o, dt=dt)
         for m in ("cube", "dtp") for o in (1, 2) for dt in (0.2, 0.1, 0.05)]
rows = divergence_table(specs)

# %%
print(f"{'mesh':>8} {'order':>5} {'dt':>6} {'||div u||':>10} {'||div J||':>10}")
for r in rows:
    print(f"{r['mesh']:>8} {r['order']:5d} {r['dt']:6.3f} {r['div_u']:10.2e} {r['div_J']:10.2e}")
