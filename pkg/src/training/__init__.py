"""
Training package: loss, optimizer, early stopping and the training loop.
"""
