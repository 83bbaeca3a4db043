"""
Configuration management package for MVAM experiments.
"""
