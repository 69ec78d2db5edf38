"""
Package tests-unit initialization.
"""
