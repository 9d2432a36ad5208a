"""Incomplete utterance restoration with a joint picker and generator."""

from ._core import (
    JetError,
    Model,
    bleu_n,
    clue_tokens,
    evaluate,
    label,
    restoration_f,
    rouge_n,
    synthesize,
    tokenize,
)

__all__ = [
    "JetError",
    "Model",
    "bleu_n",
    "clue_tokens",
    "evaluate",
    "label",
    "restoration_f",
    "rouge_n",
    "synthesize",
    "tokenize",
]
__version__ = "0.1.0"
