"""Check every sampler against a model whose posterior is known.

gaussian_location draws x = theta + N(0, 0.1^2) with a uniform prior on
[0, 1]. Every sampler compares a single simulation with the observation, so
the likelihood they target is that of one draw and the posterior is a normal
with mean x_obs and sd 0.1 truncated to the unit interval. The ABC samplers
add their tolerance on top of that.

    python3 demos/conjugate_check.py
"""
import numpy as np
from scipy import stats

from lfi import alfi, sim
from lfi.baselines import AbcConfig, mcmc_abc, rejection_abc, smc_abc
from lfi.rng import stream

gen = sim.GaussianLocation()
theta_star = 0.37
x_obs = sim.make_observation(gen, [theta_star], seed=3)
print(f"theta* = {theta_star}, x_obs = {x_obs[0]:.4f}")
exact = stats.truncnorm((0 - x_obs[0]) / 0.1, (1 - x_obs[0]) / 0.1, loc=x_obs[0], scale=0.1)
print(f"exact posterior mean {exact.mean():.4f}, mode {x_obs[0]:.4f}")

res = alfi.run(alfi.AlfiConfig(seed=3), gen, x_obs)
print(f"ALFI-beta      mode {res.theta_hat[0]:.4f}  ensemble mean {res.samples.mean():.4f}")

for name, fn in (("rejection ABC", rejection_abc), ("MCMC ABC", mcmc_abc), ("SMC ABC", smc_abc)):
    out = fn(gen, x_obs, AbcConfig(budget=10_000), stream(3, name))
    w = out.weights if out.weights is not None else np.full(len(out.samples), 1 / len(out.samples))
    print(f"{name:<14} mean {float(w @ out.samples[:, 0]):.4f}  ({len(out.samples)} samples)")
