"""
Package app-schemas initialization: models, mixtures, chain states
and reports.
"""
