"""Encode a sparse integer vector and store it in a ReLU network."""
# %%
import numpy as np

from relu_forge import evaluate
from relu_forge.sparse import (decode, depth_bound, encode, optimal_threshold,
                               sparse_vector_net)

# %% block encoding and exact decoding
rng = np.random.default_rng(1)
N, M = 256, 16
x = np.zeros(N, dtype=np.int64)
np.add.at(x, rng.integers(N, size=M), rng.choice([-1, 1], size=M))
enc = encode(x.tolist(), M)
print(enc.regime, "regime,", enc.R, "blocks,", len(enc.bits()), "bits")
assert list(decode(enc)) == x.tolist()

# %% the network g with g(n) = x_n, checked in rational arithmetic
net = sparse_vector_net(x.tolist(), M)
out = evaluate(net, [[n] for n in range(1, N + 1)])[:, 0]
print("exact:", list(out) == x.tolist())
S = optimal_threshold(N, M, int(np.abs(x).max()))
print("depth", net.depth, "bound", depth_bound(N, M, S), "width", net.width)

# %% depth stays far below the N entries stored
for j in range(4, 9):
    N, M = 4 ** j, 2 ** j
    v = np.zeros(N, dtype=np.int64)
    np.add.at(v, rng.integers(N, size=M), rng.choice([-1, 1], size=M))
    d = sparse_vector_net(v.tolist(), M).depth
    print(f"N={N:6d} M={M:4d}  depth {d:5d}  depth/N {d / N:.4f}")
