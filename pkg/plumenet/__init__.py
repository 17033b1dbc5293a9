"""
PlumeNet - Methane Plume Detection Toolkit

This package contains the modules for the plume detection pipeline:
- core: float64 tensors with reverse-mode autodiff
- spectral: multispectral patches, NDMI, on-disk patch/mask format
- mbmp: multi-band multi-pass statistical baseline
- model: attention-gated encoder/decoder network, Grad-CAM, checkpoints
- loss: focal, BCE and weighted BCE losses
- data: manifests, cropping, augmentation, epoch sampling, synthetic scenes
- metrics: connected components, scene-level and pixel-level metrics
- services: optimizer, training loop, evaluation
- commands / cli: the operator command line
- config_manager: configuration dataclasses and resolution
"""

__version__ = "1.0.0"
__author__ = "PlumeNet"
