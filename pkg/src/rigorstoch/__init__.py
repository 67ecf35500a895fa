"""Validated computable probability: valuations, random variables over
Cantor space, Markov push-forwards, a certified Wiener sampler, Ito
integration and a Picard-contraction SDE solver."""

__version__ = "0.1.0"
