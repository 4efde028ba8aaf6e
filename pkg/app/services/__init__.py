"""
Service Package

Image processing, dataset generation, regularizers, training, evaluation,
ablation, and gradient checks.
"""
