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
# # Phantoms and vessel segmentation
#
# Synthetic cervical sonograms stand in for clinical scans. Each phantom has a
# dark elliptical jugular vein (IJV), a dark round carotid (CCA) on its medial
# side, bright fascia bands and multiplicative speckle.

# %%
import math

import numpy as np

from cervreg import segmentation as seg
from cervreg.synth import PhantomSpec, ellipse_mask, generate_dataset, generate_phantom

img, truth = generate_phantom(PhantomSpec(seed=4))
print(img.shape, img.dtype, f"range [{img.min():.2f}, {img.max():.2f}]")
print("true IJV:", truth.ijv)
print("true CCA:", truth.cca)

# %% [markdown]
# Lumen pixels sit far below the tissue level even with speckle.

# %%
inside = ellipse_mask(truth.ijv, img.shape)
print(f"mean lumen {img[inside].mean():.3f}   mean image {img.mean():.3f}")

# %% [markdown]
# ## Segmentation stages
#
# Binarize dark pixels, keep the largest components, split touching blobs by a
# distance-transform watershed, then pick the CCA (most circular candidate)
# and the IJV (largest candidate beside it).

# %%
cfg = seg.SegConfig()
fg = seg.binarize(img, cfg.g_thresh)
print(f"foreground fraction at g_thresh={cfg.g_thresh}: {fg.mean():.3f}")

result = seg.segment(img, cfg)
e = result.ellipse
print(f"IJV fit: centre ({e.cx:.1f}, {e.cy:.1f}) axes {e.a:.1f} x {e.b:.1f} angle {math.degrees(e.phi):.1f} deg")
print(f"centre error {math.hypot(e.cx - truth.ijv.cx, e.cy - truth.ijv.cy):.2f} px")

# %% [markdown]
# ## Watershed on touching discs

# %%
ys, xs = np.mgrid[0:50, 0:60]
discs = ((xs - 22) ** 2 + (ys - 25) ** 2 <= 100) | ((xs - 38) ** 2 + (ys - 25) ** 2 <= 100)
parts = seg.watershed(discs)
print(len(seg.connected_components(discs)), "component ->", len(parts), "watershed regions")

# %% [markdown]
# ## Detection rate on a small dataset

# %%
data = generate_dataset(4, 3, base_seed=1)
errs = []
for im, t in data:
    f = seg.segment_ijv(im)
    errs.append(math.hypot(f.cx - t.ijv.cx, f.cy - t.ijv.cy))
print(f"{len(data)} phantoms, centre error median {np.median(errs):.2f} px, max {np.max(errs):.2f} px")
