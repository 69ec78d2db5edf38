"""
Package tests-system initialization: long-running experiments.
"""
