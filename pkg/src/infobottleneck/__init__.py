"""Linear bottleneck analysis of stimulus reconstruction pipelines."""

__version__ = "0.1.0"
