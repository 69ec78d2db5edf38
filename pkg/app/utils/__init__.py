"""
Package app.utils initialization: file formats and seeds.
"""
