"""CausalNet micro-expression recognition: flow inputs, causal attention model, LOSO and robustness harnesses."""

__version__ = "0.1.0"
