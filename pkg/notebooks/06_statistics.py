# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Paired t-test from the incomplete beta function
#
# The two-tailed tail probability of Student's t with nu degrees of freedom is
# I_x(nu/2, 1/2) at x = nu / (nu + t^2), where I is the regularized incomplete
# beta function, evaluated here by a continued fraction.

# %%
import numpy as np

from cervreg import metrics
from cervreg.segmentation import EllipseParams

r = metrics.paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
print(f"t = {r.t:.4f}, dof = {r.dof}, alpha = {r.alpha:.4f}")

# %% [markdown]
# The CDF approaches the normal distribution as the degrees of freedom grow.

# %%
for dof in (1, 4, 24, 80):
    print(dof, [round(metrics.t_cdf(t, dof), 5) for t in (-2.0, -1.0, 0.0, 1.0, 2.0)])

# %% [markdown]
# ## Belt metrics
#
# Both image metrics live on a belt of half-width 8 px around the reference
# vessel contour.

# %%
belt = metrics.belt_mask(EllipseParams(103.5, 63.5, 22, 13, 0.0))
print(f"belt pixels: {belt.count}")
u = np.zeros((2, 128, 208))
u[0], u[1] = 3.0, 4.0
print("constant (3, 4) field ->", metrics.mean_deformation_length(u, belt))
