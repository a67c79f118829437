"""Reproducible, splittable random streams.

Every stream is a Philox counter-based generator keyed by
``(master_seed, stream_index)``.  Streams with different keys are
independent by construction, and a stream can be re-created at any time
from its key alone, so per-path randomness does not depend on the order
in which paths are executed.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1


class RandomStream:
    """One reproducible random stream.

    Parameters
    ----------
    master_seed : int
        Experiment-wide seed (reduced modulo 2**64).
    stream_index : int
        Index of the stream, typically the path index.
    lane : int
        Optional sub-stream selector.  Lanes of the same stream occupy
        disjoint regions of the Philox counter space.
    """

    __slots__ = ("master_seed", "stream_index", "lane", "_gen")

    def __init__(self, master_seed, stream_index=0, lane=0):
        if stream_index < 0 or lane < 0:
            raise ValueError("stream_index and lane must be nonnegative")
        self.master_seed = int(master_seed) & _MASK64
        self.stream_index = int(stream_index)
        self.lane = int(lane)
        bitgen = np.random.Philox(
            key=np.array([self.master_seed, self.stream_index & _MASK64], dtype=np.uint64),
            counter=np.array([0, 0, 0, self.lane], dtype=np.uint64),
        )
        self._gen = np.random.Generator(bitgen)

    def __repr__(self):
        return (f"RandomStream(master_seed={self.master_seed}, "
                f"stream_index={self.stream_index}, lane={self.lane})")

    @property
    def generator(self):
        return self._gen

    def substream(self, lane):
        """Independent stream sharing this stream's key."""
        return RandomStream(self.master_seed, self.stream_index, lane)

    def uniform(self):
        """A uniform draw on (0, 1]; never 0, so ``-log`` is always finite."""
        return 1.0 - self._gen.random()

    def uniforms(self, size):
        return 1.0 - self._gen.random(size)

    def exponential(self, rate=1.0):
        return -math.log(1.0 - self._gen.random()) / rate
