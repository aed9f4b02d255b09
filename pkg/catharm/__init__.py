"""Structure-preserving representation learning with invariant and equivariant latent spaces."""

__version__ = "0.1.0"
