"""
Package tests initialization.
"""
