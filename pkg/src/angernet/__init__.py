"""Anger detection in short raw-audio windows.

Subpackages and modules:

- ``angernet.nn``        forward/backward kernels (conv, batch norm, Adam, ...)
- ``angernet.model``     the 5-layer network: assembly, transfer, freezing
- ``angernet.weights``   portable binary weight/checkpoint format
- ``angernet.audio``     WAV ingestion, resampling, normalization, windowing
- ``angernet.augment``   time stretch / pitch shift / noise training transforms
- ``angernet.data``      manifests, labels, balanced batches, synthetic corpus
- ``angernet.train``     training loop with validation-by-AUC checkpointing
- ``angernet.evaluation`` sliding-window scoring, ROC/AUC, DeLong comparison
- ``angernet.cli``       command-line entry point (``angernet ...``)
"""

__version__ = "0.1.0"
