"""
Model Package

The segmentation network and its frozen snapshot.
"""

from .segmodel import FrozenSegModel, SegModel, load_checkpoint, save_checkpoint
