"""Why a GAN-trained proposal stalls: gradients vanish as the critic improves.

The probe fixes a Gaussian proposal, trains a discriminator against it for
more and more steps, and reports the REINFORCE estimate of the proposal
gradient. A hand-built, nearly optimal discriminator closes the series.

    python3 demos/vanishing_gradient.py
"""
from lfi import sim
from lfi.baselines import gradient_vanishing_probe

gen = sim.Quadratic()
x_obs = sim.make_observation(gen, [0.2], seed=0)
for value in ("vanilla", "wasserstein"):
    print(value)
    for row in gradient_vanishing_probe(gen, value, 0, x_obs=x_obs):
        print(f"  steps {str(row['steps']):>12}  |d - d*| {row['distance']:.4f}  "
              f"|grad| {row['grad_norm']:.5f}")
