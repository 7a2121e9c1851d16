"""Poisson/multi-Bernoulli track-before-detect filters and experiment harness."""
