"""Parameter-efficient adaptation of a small encoder-decoder speech model to dialect classification.

Modules: ``autodiff`` (tensors, gradients, AdamW), ``audio`` (log-Mel frontend,
WAV, synthetic dialects), ``model`` (the transformer), ``pel`` (adapters,
reprogramming, scope selection), ``labelmap``, ``train``, ``saliency``,
``persistence`` and ``cli``.
"""

__version__ = "0.1.0"
