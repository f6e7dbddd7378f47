"""Residual-vector-quantized audio tokenizer, collaborative residual
transformers, autoregressive sampling, RL alignment of the first model, and
the tokenizer-dynamics analyses — all on a deterministic synthetic corpus."""

__version__ = "0.1.0"
