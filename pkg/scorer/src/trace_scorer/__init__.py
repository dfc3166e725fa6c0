"""Evaluator-model scorer: text in, per-token (rank, entropy) stream out.

The scorer is the only component that touches a language model; everything
downstream consumes the ".trsc" files it writes.
"""

__version__ = "0.1.0"
