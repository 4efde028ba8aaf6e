"""
Tensor Core Package

Minimal dense kernels with analytic backward passes, plus SGD with a
polynomial learning-rate schedule.
"""
