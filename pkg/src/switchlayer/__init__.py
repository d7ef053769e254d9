"""Hidden dynamics at switching surfaces: layer analysis, event-driven
integration, sigmoid regularization and closure models."""

__version__ = "0.1.0"
