"""Model-driven and LLM-assisted workflows for evolving software-defined vehicles."""

__version__ = "0.1.0"
