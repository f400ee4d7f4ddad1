"""
dmvi - variational inference with diffusion-model guides, plus ADVI and IAF baselines
"""

__version__ = "0.1.0"
