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
# # The registration U-Net
#
# Moving and fixed images enter as two channels. Four strided 3x3 encoder
# convolutions halve the resolution each time, the decoder upsamples and
# concatenates the matching encoder features, and a final convolution emits
# the two-channel displacement field. Three filter configurations are
# provided.

# %%
import numpy as np

from cervreg import train, unet

for name in ("full", "reduced", "filters16"):
    net = unet.build(unet.preset(name))
    print(f"{name:<10} {unet.param_count(net):>7} parameters")

# %%
for row in unet.layer_table(unet.build(unet.preset("reduced"))):
    print(row)

# %% [markdown]
# A fresh network predicts an almost zero field, so training starts near
# the identity transform.

# %%
rng = np.random.default_rng(0)
m, f = rng.random((128, 208)), rng.random((128, 208))
u = unet.build(unet.preset("full")).forward(m, f)
print(u.shape, f"max |u| = {np.abs(u).max():.2e}")

# %% [markdown]
# ## Backpropagation check
#
# Gradients of the loss with respect to the weights agree with central
# differences in double precision.

# %%
net = unet.build(unet.preset("filters16"), dtype=np.float64)
net.params[-2] = rng.normal(0, 0.3, size=net.params[-2].shape)
m, f = rng.random((16, 16)), rng.random((16, 16))
u = net.forward(m, f, cache=True)
_, g = train.loss_and_gradient(f, m, u, 0.01)
grads = net.backward(g)

k, idx, h = 4, (1, 2, 3, 5), 1e-6
w = net.params[k]
w[idx] += h
jp = train.loss(f, m, net.forward(m, f), 0.01).J
w[idx] -= 2 * h
jm = train.loss(f, m, net.forward(m, f), 0.01).J
w[idx] += h
print(f"backprop {grads[k][idx]:.8e}   finite difference {(jp - jm) / (2 * h):.8e}")
