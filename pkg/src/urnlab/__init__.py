"""Unitary-evolution and LSTM sequence models on synthetic syntax benchmarks."""

import ctypes as _ctypes

__version__ = "0.1.0"

# The batched kernels churn through multi-MB temporaries; with glibc's default
# mmap threshold every one is a fresh mmap whose pages fault on first touch.
# Keep large blocks in the arena so they get reused.
try:
    _libc = _ctypes.CDLL(None)
    _libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    _libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
except (OSError, AttributeError):  # non-glibc platforms
    pass
