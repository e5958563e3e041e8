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
# # PCA approximation of pre-registered images
#
# Images are the variables and pixels the observations, so the covariance
# matrix is only p x p for p images. Its eigenvectors (loadings) combine the
# images into principal-component images; an image approximated from the
# first q components keeps the shared anatomy and drops most of the speckle.

# %%
import numpy as np

from cervreg import pca
from cervreg.affine import apply_affine, compute_affine, default_reference
from cervreg.segmentation import segment_ijv
from cervreg.synth import generate_dataset

ref = default_reference()
crops = []
for img, _ in generate_dataset(5, 4, base_seed=2):
    crops.append(apply_affine(img, compute_affine(segment_ijv(img), ref, img.shape)))
model = pca.fit(crops)
print(f"p={model.p} images, n={model.n} pixels")

# %% [markdown]
# Cumulative explained variance ratio for odd q.

# %%
for q, c in pca.cevr_table(model):
    print(f"q={q:>2}  cEVR={c:.3f}")

# %% [markdown]
# ## Denoising effect
#
# Speckle is independent between images, so it spreads over all components;
# the anatomy concentrates in the first few. The q = 8 approximation is much
# smoother than the original.

# %%
def roughness(im):
    return float(np.mean(np.abs(np.diff(im, axis=1))))

approx = pca.approximate(model, crops[3], 8)
print(f"mean horizontal gradient: original {roughness(crops[3]):.4f}, q=8 {roughness(approx):.4f}")
print(f"q=p reconstruction error {np.max(np.abs(pca.reconstruct(model, crops[3], model.p) - crops[3])):.1e}")
