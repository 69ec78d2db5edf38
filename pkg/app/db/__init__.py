"""
Package app.db initialization: chain draw stores.
"""
