from .sim import make_generator, simulate, make_observation
