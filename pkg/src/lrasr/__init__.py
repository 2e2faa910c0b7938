"""lrasr — a desk-scale toolkit for adapting self-supervised speech models
to under-resourced languages: corpus preparation, continued pretraining,
CTC fine-tuning, n-gram language modeling, beam-search decoding, and
CER/WER evaluation.
"""

__version__ = "0.1.0"
