"""Named target functions on [0, 1]^d with smoothness metadata.

Every function takes points of shape ``(B, d)`` (or ``(B,)`` when ``d = 1``)
and returns values of shape ``(B,)``.  The metadata records the smoothness
index ``s`` and integrability ``q`` the caller is entitled to claim; it is
used to validate embedding conditions and to schedule the multiscale
construction, never to compute norms.
"""
from dataclasses import dataclass, field

import numpy as np

SOBOLEV = "sobolev"
BESOV = "besov"


@dataclass(frozen=True)
class TargetFunction:
    """Callable on [0, 1]^d plus a claimed smoothness class."""

    fn: object
    d: int = 1
    s: float = 1.0
    q: float = 2.0
    space: str = SOBOLEV
    r: float = None
    name: str = "f"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.d == 1 else x[None, :]
        if x.shape[-1] != self.d:
            raise ValueError(f"expected points in R^{self.d}, got shape {x.shape}")
        return np.asarray(self.fn(x), dtype=float).reshape(x.shape[0])

    def with_smoothness(self, s=None, q=None):
        """Copy with a different claimed ``(s, q)``."""
        return TargetFunction(self.fn, self.d, self.s if s is None else s,
                              self.q if q is None else q, self.space, self.r,
                              self.name, dict(self.params))

    def describe(self):
        return {"name": self.name, "d": self.d, "s": self.s, "q": _fmt_q(self.q),
                "space": self.space, "params": dict(self.params)}


def _fmt_q(q):
    return "inf" if np.isinf(q) else q


def sine(d=1, freq=1.0, s=1.0, q=2.0):
    """``prod_j sin(2 pi freq x_j)``; smooth, so any ``s`` may be claimed."""
    def fn(x):
        return np.prod(np.sin(2 * np.pi * freq * x), axis=1)
    return TargetFunction(fn, d, s, q, name="sin", params={"freq": freq})


def abs_power(d=1, c=0.5, gamma=0.5, q=2.0, s=None):
    """``|x - c|^gamma`` (Euclidean distance to the point ``c``).

    In one dimension this lies in ``W^s(L_q)`` for ``s < gamma + 1/q``;
    the default claim backs off from the critical index by 0.05.
    """
    c = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy()
    if s is None:
        s = gamma + (0.0 if np.isinf(q) else d / q) - 0.05

    def fn(x):
        return np.linalg.norm(x - c, axis=1) ** gamma
    return TargetFunction(fn, d, s, q, name="abs_power",
                          params={"c": c.tolist(), "gamma": gamma})


def bump(d=1, center=0.5, radius=0.3, s=2.0, q=2.0):
    """Tensor-product ``C^inf`` bump ``prod_j exp(1 - 1/(1 - t_j^2))``."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (d,)).copy()

    def fn(x):
        t = (x - center) / radius
        inside = np.abs(t) < 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            v = np.where(inside, np.exp(1 - 1 / (1 - np.where(inside, t, 0) ** 2)), 0.0)
        return np.prod(v, axis=1)
    return TargetFunction(fn, d, s, q, name="bump",
                          params={"center": center.tolist(), "radius": radius})


def wavelet_sum(d=1, levels=6, decay=1.5, seed=0, q=np.inf):
    """Finite sum of dyadic hat wavelets with amplitudes ``2^-(decay j)``.

    Hats are Lipschitz, so with ``decay = sigma`` the sum behaves like a
    Besov ``B^sigma_inf(L_inf)`` function for ``sigma < 2``; the claim is
    ``s = min(decay, 2) - 0.05`` with ``r = inf``.
    """
    rng = np.random.default_rng(seed)
    signs = [rng.choice([-1.0, 1.0], size=(2 ** j,) * d) for j in range(levels)]

    def fn(x):
        out = np.zeros(x.shape[0])
        for j, sg in enumerate(signs):
            n = 2 ** j
            cell = np.clip(np.floor(x * n).astype(int), 0, n - 1)
            t = x * n - cell
            hat = np.prod(1 - np.abs(2 * t - 1), axis=1)
            out += 2.0 ** (-decay * j) * sg[tuple(cell.T)] * hat
        return out
    s = min(decay, 2.0) - 0.05
    return TargetFunction(fn, d, s, q, space=BESOV, r=np.inf, name="wavelet_sum",
                          params={"levels": levels, "decay": decay, "seed": seed})


def constant(d=1, c=1.0, s=1.0, q=2.0):
    def fn(x):
        return np.full(x.shape[0], float(c))
    return TargetFunction(fn, d, s, q, name="constant", params={"c": c})


REGISTRY = {
    "sin": sine,
    "abs_power": abs_power,
    "bump": bump,
    "wavelet_sum": wavelet_sum,
    "constant": constant,
}


def make_function(name, **kwargs):
    """Look up a registered function family and instantiate it."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown function {name!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**kwargs)
