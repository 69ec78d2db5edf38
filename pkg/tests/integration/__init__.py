"""
Package tests-integration initialization: command line runs.
"""
