"""
Package app-exceptions initialization.
"""
