"""Sphere packings and spherical codes from pruned Poisson processes and an iterated nibble."""

__version__ = "0.1.0"
