"""Integer DTT+ transforms: graph learning, progressive decomposition and integer kernels."""

__version__ = "0.1.0"
