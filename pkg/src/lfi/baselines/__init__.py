from .abc import AbcConfig, effective_sample_size, mcmc_abc, rejection_abc, smc_abc
from .avo import (AvoConfig, avo_run, gaussian_score, gradient_vanishing_probe,
                  near_optimal_discriminator, reinforce_gradient)
