"""Counter-based uniform streams.

The i-th uniform of a stream is a pure function of ``(seed, stream_id, i)``,
so any slice of draws can be produced independently and in any order.
Philox-4x64 is used as the keyed bijection: each counter value yields four
64-bit words.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_WORDS_PER_BLOCK = 4
_INV_2_52 = 2.0**-52


def worker_count(requested: int | None = None) -> int:
    """Resolve a worker count; ``GOODHART_THREADS`` caps it (0 means auto)."""
    if requested is None:
        env = os.environ.get("GOODHART_THREADS", "0").strip() or "0"
        try:
            requested = int(env)
        except ValueError:
            requested = 0
    if requested <= 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


@dataclass(frozen=True)
class CounterStream:
    seed: int
    stream_id: int = 0

    def _key(self) -> np.ndarray:
        ss = np.random.SeedSequence([int(self.seed) & (2**64 - 1), int(self.stream_id)])
        return ss.generate_state(2, dtype=np.uint64)

    def raw(self, start: int, count: int) -> np.ndarray:
        """64-bit words with indices ``start .. start+count-1``."""
        if count <= 0:
            return np.empty(0, dtype=np.uint64)
        block, offset = divmod(int(start), _WORDS_PER_BLOCK)
        bitgen = np.random.Philox(key=self._key(), counter=block)
        words = bitgen.random_raw(offset + count)
        return words[offset:]

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """Uniforms on the open interval (0, 1): midpoints of a 2**-52 grid, so quantiles stay finite."""
        words = self.raw(start, count)
        return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * _INV_2_52

    def uniforms_parallel(self, count: int, chunk: int = 1 << 20, workers: int | None = None) -> np.ndarray:
        """Same values as ``uniforms(0, count)``, generated chunkwise."""
        out = np.empty(count, dtype=np.float64)
        starts = list(range(0, count, chunk))

        def fill(s: int) -> None:
            n = min(chunk, count - s)
            out[s : s + n] = self.uniforms(s, n)

        nw = min(worker_count(workers), max(1, len(starts)))
        if nw == 1:
            for s in starts:
                fill(s)
        else:
            with ThreadPoolExecutor(nw) as pool:
                list(pool.map(fill, starts))
        return out
