"""
Repository Package

File-backed repositories: netpbm images, manifests, checkpoints,
pseudo-label sets, and run reports.
"""
