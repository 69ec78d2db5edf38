"""
Package app initialization: Bayesian estimation of dynamic discrete
choice models with Gumbel-mixture utility shocks.
"""
