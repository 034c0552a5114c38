# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``reference.py``.

Must consume uniforms in exactly the same order as the reference kernels;
the parity tests compare raw streams and sampled outputs bit for bit.
"""

from libc.math cimport cos, log, sqrt

cdef double TWO_PI = 6.283185307179586476925286766559
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef class DetRng:
    """SplitMix64 stream: cheap, seedable, identical across backends."""

    cdef unsigned long long _state

    def __init__(self, seed):
        self._state = <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF)

    def getstate(self):
        return self._state

    cdef inline unsigned long long _next(self):
        self._state += 0x9E3779B97F4A7C15ULL
        cdef unsigned long long z = self._state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
        return z ^ (z >> 31)

    def next_u64(self):
        return self._next()

    cdef inline double _uniform(self):
        return <double> (self._next() >> 11) * INV_2_53

    def uniform(self):
        """Uniform double in [0, 1)."""
        return self._uniform()

    cdef inline double _gauss(self, double mu, double sigma):
        cdef double u1 = <double> ((self._next() >> 11) + 1) * INV_2_53
        cdef double u2 = <double> (self._next() >> 11) * INV_2_53
        return mu + sigma * (sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2))

    def gauss(self, double mu, double sigma):
        """Box-Muller normal; consumes exactly two uniforms."""
        return self._gauss(mu, sigma)


def frame_detections(DetRng rng, int n_candidates, double miss_rate,
                     double spurious_rate, double conf_lo, double conf_hi):
    """Sample one frame of detector output; see the reference docstring."""
    cdef double hit_p = 1.0 - miss_rate
    cdef double span = conf_hi - conf_lo
    cdef int i
    hits = []
    confs = []
    for i in range(n_candidates):
        if rng._uniform() < hit_p:
            hits.append(True)
            confs.append(conf_lo + rng._uniform() * span)
        else:
            hits.append(False)
            confs.append(0.0)
    spurious = None
    if rng._uniform() < spurious_rate:
        pick = rng._uniform()
        spurious = (pick, conf_lo + rng._uniform() * span)
    return hits, confs, spurious


def gauss_clamped(DetRng rng, double mean, double sigma):
    """Gaussian sample floored at zero; exact passthrough when sigma == 0."""
    if sigma == 0.0:
        return mean
    cdef double value = rng._gauss(mean, sigma)
    return value if value > 0.0 else 0.0


def channel_fate(DetRng rng, double loss_probability,
                 double latency_min_ms, double latency_max_ms):
    """Decide one send: ``(delivered, latency_ms)``."""
    cdef bint dropped = rng._uniform() < loss_probability
    cdef double latency = latency_min_ms + rng._uniform() * (latency_max_ms - latency_min_ms)
    return (not dropped), latency
