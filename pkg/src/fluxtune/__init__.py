"""Forward models and parameter extraction for flux-tunable resonators."""

__version__ = "0.1.0"
