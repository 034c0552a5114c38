"""Reference (pure Python) implementation of the sampling kernels.

These are the inner-loop primitives the simulator spends its time in:
deterministic random draws for detector hits, sensor noise, and lossy
channel fates.  The compiled twin in ``_speedups.pyx`` implements the
same draw order bit for bit; any change here must be mirrored there and
is guarded by the backend parity tests.

Draw-order contract (consumed uniforms per call):

* ``frame_detections``: one uniform per candidate, plus one per hit for
  its confidence; then one uniform for the spurious gate, plus two more
  (class pick, confidence) only when the gate fires.
* ``gauss_clamped``: zero draws when sigma == 0, otherwise exactly two.
* ``channel_fate``: always two draws (loss gate, latency), even for
  dropped sends, so drop decisions never shift later latencies.
"""

from math import cos, log, pi, sqrt

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * pi
_INV_2_53 = 2.0 ** -53


class DetRng:
    """SplitMix64 stream: cheap, seedable, identical across backends."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def getstate(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def gauss(self, mu: float, sigma: float) -> float:
        """Box-Muller normal; consumes exactly two uniforms."""
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53  # (0, 1]
        u2 = (self.next_u64() >> 11) * _INV_2_53
        return mu + sigma * (sqrt(-2.0 * log(u1)) * cos(_TWO_PI * u2))


def frame_detections(rng, n_candidates, miss_rate, spurious_rate, conf_lo, conf_hi):
    """Sample one frame of detector output.

    Returns ``(hits, confs, spurious)`` where ``hits[i]`` says whether
    candidate ``i`` was detected, ``confs[i]`` is its confidence (0.0 for
    misses), and ``spurious`` is ``None`` or a ``(class_pick, confidence)``
    pair with ``class_pick`` uniform in [0, 1).
    """
    hit_p = 1.0 - miss_rate
    span = conf_hi - conf_lo
    hits = []
    confs = []
    for _ in range(n_candidates):
        if rng.uniform() < hit_p:
            hits.append(True)
            confs.append(conf_lo + rng.uniform() * span)
        else:
            hits.append(False)
            confs.append(0.0)
    spurious = None
    if rng.uniform() < spurious_rate:
        pick = rng.uniform()
        spurious = (pick, conf_lo + rng.uniform() * span)
    return hits, confs, spurious


def gauss_clamped(rng, mean: float, sigma: float) -> float:
    """Gaussian sample floored at zero; exact passthrough when sigma == 0."""
    if sigma == 0.0:
        return mean
    value = rng.gauss(mean, sigma)
    return value if value > 0.0 else 0.0


def channel_fate(rng, loss_probability, latency_min_ms, latency_max_ms):
    """Decide one send: ``(delivered, latency_ms)``."""
    dropped = rng.uniform() < loss_probability
    latency = latency_min_ms + rng.uniform() * (latency_max_ms - latency_min_ms)
    return (not dropped), latency
