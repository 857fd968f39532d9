"""Dual-view, dual-modality collaborative CTR recommender.

Items are encoded from two modalities (text and a shared-entity item graph),
users from two views (preferred and disliked history items), and clicks are
scored by a weighted pair of inner products. Everything differentiable runs
on the small reverse-mode engine in :mod:`dualrec.autodiff`.
"""

__version__ = "0.1.0"
