"""PCA-boosted autoencoders: PCA-equivalent initialization and low-data benchmarks."""

__version__ = "1.0.0"
