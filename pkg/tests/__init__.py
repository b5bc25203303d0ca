"""
Test package for dgdata.
"""
