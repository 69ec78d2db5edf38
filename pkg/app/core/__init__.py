"""
Package app-core initialization: command lifespan and logging.
"""
