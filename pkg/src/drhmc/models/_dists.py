"""Scalar log-density pieces shared by the benchmark models."""

import math

LOG_TWO_PI = math.log(2.0 * math.pi)


def log_normal(x, mean, var):
    """Log pdf of N(mean, var) at x; var is the variance."""
    return -0.5 * ((x - mean) ** 2 / var + math.log(var) + LOG_TWO_PI)


def log_half_cauchy(x, scale):
    """Log pdf of the positive half-Cauchy with the given scale, for x >= 0."""
    return math.log(2.0 / (math.pi * scale)) - math.log1p((x / scale) ** 2)


def log_cauchy(x, scale):
    """Log pdf of the zero-centered Cauchy with the given scale."""
    return -math.log(math.pi * scale) - math.log1p((x / scale) ** 2)
