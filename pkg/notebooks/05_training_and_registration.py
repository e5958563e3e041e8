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
# # Unsupervised training and registration
#
# The loss is the mean squared intensity difference between the fixed image
# and the warped moving image, plus gamma times the squared forward
# differences of the field. No ground-truth fields are needed.

# %%
import numpy as np

from cervreg import pipeline, synth, train, unet
from cervreg.affine import reference_in_crop

cfg = pipeline.load_experiment_config()
data = synth.generate_dataset(4, 4, base_seed=0)
prepared, _ = pipeline.prepare_dataset(data, cfg.seg, reference_in_crop(cfg.reference), 0)
print(f"{len(prepared.images)} moving images, reference id {prepared.reference_id}")

# %% [markdown]
# A short run of the reduced net. The default schedule is 300 epochs at a
# learning rate of 1e-4; here a few epochs at 1e-3 keep the demo quick.

# %%
tcfg = train.TrainConfig(epochs=5, learning_rate=1e-3)
net, hist = train.train(prepared.images, prepared.reference, unet.preset("reduced"), tcfg,
                        ids=prepared.ids,
                        progress=lambda e, t: print(f"epoch {e}: J={t.J:.5f} L_smooth={t.L_smooth:.4f}"))

# %% [markdown]
# Belt metrics on the held-out images: mean |dI| before and after warping,
# and the mean displacement length.

# %%
for r in hist.test:
    print(f"image {r.image_id:>3}: dI {r.delta_i_before:.4f} -> {r.delta_i:.4f}   l = {r.l_bar:.3f} px")

# %%
u, moved, terms = train.register_pair(net, prepared.images[0], prepared.reference)
print(terms)
