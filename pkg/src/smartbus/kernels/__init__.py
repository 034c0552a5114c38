"""Sampling kernels with backend selection.

The compiled extension is preferred when importable; set
``SMARTBUS_PURE_KERNELS=1`` to force the pure-Python reference.  Both
backends produce bit-identical streams, so simulation output never
depends on which one loaded.
"""

import os

from . import reference as _reference

_impl = _reference
BACKEND = "pure"

if os.environ.get("SMARTBUS_PURE_KERNELS", "") in ("", "0"):
    try:
        from . import _speedups as _compiled

        _impl = _compiled
        BACKEND = "compiled"
    except ImportError:
        pass

DetRng = _impl.DetRng
frame_detections = _impl.frame_detections
gauss_clamped = _impl.gauss_clamped
channel_fate = _impl.channel_fate

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def backend() -> str:
    """Name of the backend in use: ``compiled`` or ``pure``."""
    return BACKEND


def load_backend(name: str):
    """Fetch a specific backend module ("pure"/"compiled") or None.

    Used by the parity tests and the benchmark; everything else should go
    through the module-level aliases.
    """
    if name == "pure":
        return _reference
    if name == "compiled":
        try:
            from . import _speedups

            return _speedups
        except ImportError:
            return None
    raise ValueError(f"unknown backend {name!r}")


def derive_seed(root_seed: int, label: str) -> int:
    """Stable per-subsystem seed: FNV-1a of the label folded into the root.

    Every random stream in a run is named (e.g. ``detector:B1``) so that
    adding a subsystem never perturbs the draws of another.
    """
    h = _FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    rng = DetRng((root_seed & _MASK64) ^ h)
    rng.next_u64()
    return rng.next_u64()
