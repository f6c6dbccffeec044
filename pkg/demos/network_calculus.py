"""Tour of the network calculus: exact composition, products and sorting."""
# %%
from fractions import Fraction

import numpy as np

from relu_forge import compose, concat, evaluate, sum_nets
from relu_forge.primitives import (Breakpoints, order_statistic_net, product_net, pwl_to_net,
                                   square_net)

# %% a piecewise linear function as a network, composed with itself
hat = pwl_to_net(Breakpoints([0, Fraction(1, 2), 1], [0, 1, 0]))
saw = compose(hat, hat)
x = [[Fraction(i, 8)] for i in range(9)]
print("hat o hat on k/8:", [str(v) for v in evaluate(saw, x)[:, 0]])
print("depth", saw.depth, "width", saw.width)

# %% parallel and summed networks stay exact
both = concat(hat, hat)
print("concat:", evaluate(both, [[Fraction(1, 4), Fraction(3, 4)]])[0])
print("sum:", evaluate(sum_nets([hat, saw]), [[Fraction(3, 8)]])[0])

# %% products: the error falls by a factor 4 per extra depth step
rng = np.random.default_rng(0)
pts = rng.uniform(-1, 1, size=(2000, 2))
for k in range(1, 7):
    err = np.abs(evaluate(product_net(k), pts, "f64")[:, 0] - pts[:, 0] * pts[:, 1]).max()
    sq = np.abs(evaluate(square_net(k), pts[:, :1], "f64")[:, 0] - pts[:, 0] ** 2).max()
    print(f"k={k}  product err {err:.2e}  square err {sq:.2e}")

# %% the 4th largest of 2**3 numbers by a sorting network
med = order_statistic_net(4, 3)
vals = [Fraction(v) for v in (4, -1, 7, 2, 0, 9, -3, 5)]
print("4th largest:", evaluate(med, [vals])[0, 0], "depth", med.depth)
