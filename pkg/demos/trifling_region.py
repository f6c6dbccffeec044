"""Where each base is wrong, and how the median hides it."""
# %%
import numpy as np

from relu_forge import evaluate
from relu_forge.functions import sine
from relu_forge.pipeline import build_approximant

# %% one approximant, four prime bases
f = sine()
app = build_approximant(f, 16, p=2)
ens = app.ensemble
print("bases", ens.bases, "levels", ens.levels, "eps", float(ens.eps))

# %% sample near the cell faces, where single bases misbehave
x = np.concatenate([np.random.default_rng(0).uniform(size=(5000, 1)),
                    ens.trifling_points(seed=0)])
good = ens.good_masks(x)
print("bad fraction per base:", (~good).mean(1).round(4))
print("most bases bad at one point:", int((~good).sum(0).max()))

# %% per-base sup error on the bad slabs versus the median
target = f(x)
outs = app.base_outputs(x)
med = np.asarray(evaluate(app.net, x, "f64"), float)[:, 0]
for b, o, g in zip(ens.bases, outs, good):
    bad = np.abs(o - target)[~g]
    print(f"base {b}: bad-slab sup error {bad.max() if bad.size else 0:.3f}")
print("median sup error", np.abs(med - target).max().round(3))
