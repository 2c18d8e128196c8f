"""surrex: surrogate modelling and explainability for agent-based simulators."""

__version__ = "0.1.0"
