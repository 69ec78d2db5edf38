"""
Package app.config initialization: settings and run presets.
"""
