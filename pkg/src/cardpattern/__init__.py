"""Card fraud scoring from purchase amounts and visited regions.

Amount models (AR and Gaussian process) give an amount confidence, region
models (sequential association rules and a transition matrix) give a region
confidence, and a transaction is flagged when both fall below a threshold.
"""

from .core import (CardPatternError, ConfidencePoint, Label, ModelConfig, Transaction,
                   TransactionSequence, log_transform)

__all__ = ["CardPatternError", "ConfidencePoint", "Label", "ModelConfig", "Transaction",
           "TransactionSequence", "log_transform"]
