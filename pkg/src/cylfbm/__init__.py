"""Fractional Brownian motion, cylindrical fBm and the stochastic Cauchy problem."""
