"""Monte Carlo laboratory for Brownian local time, intersection local times and the L2-modulus CLT."""

__version__ = "0.1.0"
