"""
Pydantic Schemas Package

Validated models for images, datasets, the network, the regularizers,
and training configuration and reports.
"""
