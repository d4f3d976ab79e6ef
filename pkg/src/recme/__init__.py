"""Self-contained speaker identification engine.

Pipeline: WAV ingestion -> 16 kHz mono 1-second clips -> FFT magnitude
features -> residual 1D-CNN trained with Adam, step-decayed learning rate
and early stopping -> majority-vote identification with unknown-speaker
enrollment and retraining. No external ML framework; the numerics are
implemented here on top of numpy arrays.
"""

CLIP_RATE = 16000
CLIP_LEN = 16000
FEAT_LEN = 8000

__version__ = "0.1.0"
