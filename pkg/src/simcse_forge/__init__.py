"""simcse-forge: a desk-scale trainer for contrastive sentence embeddings.

Everything runs on a small hand-written reverse-mode autodiff core over
float64 numpy arrays, so every gradient in the repo can be checked against
central finite differences. Training is fully deterministic given a seed.
"""

__version__ = "0.1.0"
