"""Gap-acceptance prediction with a cognitive interaction model."""

__version__ = "0.1.0"
