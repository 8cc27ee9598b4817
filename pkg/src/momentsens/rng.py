"""Counter-based random streams.

Every draw is a pure function of ``(seed, stream, row)``: rows are grouped in
fixed blocks of :data:`BLOCK` and block ``b`` of stream ``s`` is generated by a
Philox generator keyed on ``(seed, s * 2**32 + b)``. Blocks can therefore be
produced in any order, or concurrently, without changing a single bit.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 1 << 16


def _block_generator(seed, stream, block):
    key = np.array([int(seed) & (2**64 - 1), (int(stream) << 32) + int(block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw(kind, seed, stream, n, width, n_jobs):
    out = np.empty((n, width))
    n_blocks = -(-n // BLOCK)

    def fill(b):
        lo, hi = b * BLOCK, min(n, (b + 1) * BLOCK)
        gen = _block_generator(seed, stream, b)
        if kind == "normal":
            vals = gen.standard_normal((BLOCK, width))
        else:
            vals = gen.random((BLOCK, width))
        out[lo:hi] = vals[: hi - lo]

    if n_jobs is None or n_jobs <= 1 or n_blocks == 1:
        for b in range(n_blocks):
            fill(b)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(fill, range(n_blocks)))
    return out


def normal_rows(seed, n, width, stream=0, n_jobs=None):
    """``(n, width)`` standard normals; row ``i`` depends only on ``(seed, stream, i)``."""
    return _draw("normal", seed, stream, n, width, n_jobs)


def uniform_rows(seed, n, width, stream=0, n_jobs=None):
    """``(n, width)`` uniforms on ``[0, 1)`` with the same keying as :func:`normal_rows`."""
    return _draw("uniform", seed, stream, n, width, n_jobs)
