"""Deformable registration of cervical ultrasound images.

Pipeline stages: synthetic phantoms (:mod:`synth`), vessel segmentation
(:mod:`segmentation`), ellipse-driven affine pre-registration (:mod:`affine`),
PCA image approximation (:mod:`pca`), a U-Net predicting displacement fields
(:mod:`unet`), its training (:mod:`train`), evaluation metrics
(:mod:`metrics`) and the experiment pipeline (:mod:`pipeline`, :mod:`cli`).
"""

__version__ = "0.1.0"
