"""
Package app.services initialization: solvers, samplers and posterior
post-processing.
"""
