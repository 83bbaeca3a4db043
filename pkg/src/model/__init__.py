"""
Model package: the MVAM architecture and its checkpoint format.
"""
