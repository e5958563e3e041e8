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
# # End-to-end experiment
#
# Three net structures times two image types (original, PCA q = 8) are
# trained on a shared split and compared with paired t-tests. The same run is
# available as `cervreg experiment --config FILE --out DIR`.

# %%
import tempfile
from pathlib import Path

from cervreg import pipeline
from cervreg.config import ConfigError, parse

TEXT = """
[data]
subjects = 3
per_subject = 4

[train]
epochs = 2
learning_rate = 1e-3

[experiment]
seeds = 0
"""
cfg = pipeline.experiment_config(parse(TEXT, "demo.ini"))
out = Path(tempfile.mkdtemp())
res = pipeline.run_experiment(cfg, out, log=print)

# %%
print(pipeline.report(out))

# %%
print((out / "comparison.csv").read_text())

# %% [markdown]
# Config errors point at the offending line and column.

# %%
try:
    pipeline.experiment_config(parse("[train]\nepochs = lots\n", "bad.ini"))
except ConfigError as exc:
    print(exc)
