"""Reserved label values shared across attribution and evaluation."""

# Prediction sentinel: the attributor declined to name any known author.
REJECT = "REJECT"

# Gold-side marker: the document's true author is not in the reference pool.
UNSEEN = "UNSEEN"

# Author labels in manifests must not collide with the sentinels.
RESERVED_LABELS = frozenset({REJECT, UNSEEN})
