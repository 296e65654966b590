"""Knowledge-graph embeddings with numerical literals.

Base link-prediction models, five literal-fusion strategies, dataset
enrichment and ablation transforms, and filtered ranking evaluation.
"""

__version__ = "0.1.0"
