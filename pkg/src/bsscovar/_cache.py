"""Thread-safe LRU cache bounded by the total size of the cached arrays."""

from collections import OrderedDict
import threading

import numpy as np

# shared budget for covariance matrices and their factors
BUDGET_BYTES = 1_600_000_000


def _nbytes(v):
    if isinstance(v, np.ndarray):
        return v.nbytes
    m = getattr(v, "matrix", None)
    return m.nbytes if isinstance(m, np.ndarray) else 0


class ArrayCache:
    def __init__(self, budget=BUDGET_BYTES):
        self.budget = budget
        self._data = OrderedDict()
        self._size = 0
        self._lock = threading.Lock()

    def get_or_build(self, key, build):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        val = build()
        nb = _nbytes(val)
        with self._lock:
            if key in self._data:
                return self._data[key]
            while self._data and self._size + nb > self.budget:
                _, old = self._data.popitem(last=False)
                self._size -= _nbytes(old)
            if nb <= self.budget:
                self._data[key] = val
                self._size += nb
            return val

    def clear(self):
        with self._lock:
            self._data.clear()
            self._size = 0


CACHE = ArrayCache()
