"""
Data processing package for corpora, vocabularies, embeddings and synthetic data.
"""
