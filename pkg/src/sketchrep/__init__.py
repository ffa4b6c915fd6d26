"""sketchrep: dual-branch sketch representation learning at desk scale.

Library surface for the pipeline: stroke/raster data handling, image
entropy filtering, a small reverse-mode autodiff core, the dual-branch
CNN-RNN encoder, hashing losses and staged training with alternating code
updates, Hamming-space retrieval, zero-shot prototype embedding, and the
evaluation metrics. The `sketchrep` CLI batches these into commands.
"""

__version__ = "0.1.0"
