"""Transition fingerprints for LLM authorship attribution.

Per-token score streams (rank, entropy) from an external evaluator model are
compressed into 2D transition fingerprints, compared with distribution
distances, and used for nearest-reference attribution with calibrated
open-set rejection.
"""

__version__ = "0.1.0"

from tracefp.labels import REJECT, UNSEEN

__all__ = ["REJECT", "UNSEEN", "__version__"]
