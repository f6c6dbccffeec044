"""Error against depth for a smooth target, and the fitted rate."""
# %%
from relu_forge.functions import abs_power, sine
from relu_forge.pipeline import fit_rate, rate_experiment

# %% L2 error of the median approximant for sin(2 pi x)
reps, fit = rate_experiment(sine(1, s=1, q=2), [8, 16, 32, 64], 2, seed=0)
for r in reps:
    print(f"n={r.n:3d} depth={r.depth:5d} width={r.width:3d} error={r.error:.3e}")
print("slope %.2f  R^2 %.3f  (predicted -2)" % (fit[0], fit[2]))

# %% a rougher target decays more slowly
f = abs_power(gamma=0.5)
reps, fit = rate_experiment(f, [8, 16, 32], 2, seed=0)
print(f"|x-c|^0.5: s={f.s:.2f} slope {fit[0]:.2f}")

# %% refitting from raw (depth, error) pairs
print(fit_rate([(r.depth, r.error) for r in reps]))
