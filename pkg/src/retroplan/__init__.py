"""Retrosynthesis-style planning with policy-guided MCTS and best-first search over graph rewrite rules."""

__version__ = "0.1.0"
