"""Physical-feasibility engine for semantic segmentation.

Differentiable morphology penalty (area opening of enclosed segments plus
selective dilation of discontinued ones) with exact tape gradients, and an
exact discrete analyzer for label maps, constraint catalogs, and corpus
statistics.
"""

__version__ = "1.0.0"


def version_string(precision: str = "double") -> str:
    return f"phyfea-engine {__version__} {precision}"
