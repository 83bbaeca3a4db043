"""
Metrics package for multi-label evaluation.
"""
