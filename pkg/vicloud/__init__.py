"""Variable Importance Clouds over Rashomon sets of ridge, logistic and tree
models."""
__version__ = '0.1.0'
