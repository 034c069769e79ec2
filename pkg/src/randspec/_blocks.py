"""Deterministic block-structured Monte Carlo driver.

Random draws are organized into fixed-size blocks. The block size is a pure
function of the draw width, and block b is generated by a Philox stream keyed
by (seed, stream, b) alone, so

* draw i can be regenerated in isolation: generate block i // B and take row
  i % B (generation is row-major, so a prefix of a block is bit-identical to
  generating fewer rows);
* results are independent of how blocks are partitioned over workers, because
  workers always own whole blocks and per-block results are merged in block
  index order.
"""

from __future__ import annotations

import concurrent.futures
import os

import numpy as np

MASK64 = (1 << 64) - 1

# Streams separate independent sources of randomness within one experiment.
STREAM_PRIMARY = 0
STREAM_SECONDARY = 1
STREAM_IDS = 2

_BLOCK_BYTES = 1 << 23  # target bytes of doubles generated per block
_BLOCK_CAP = 16384


def block_size(width: int) -> int:
    """Rows per generation block for draws of `width` doubles.

    Pure function of the width; part of the reproducibility contract.
    """
    rows = _BLOCK_BYTES // (8 * max(1, int(width)))
    return int(max(1, min(_BLOCK_CAP, rows)))


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Independently keyed generator for one block of one stream."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    if not 0 <= block < (1 << 48):
        raise ValueError("block index out of range")
    key = np.array(
        [seed & MASK64, ((stream << 48) ^ block) & MASK64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def uniform_block(
    seed: int, block: int, rows: int, width: int, stream: int = 0
) -> np.ndarray:
    """(rows, width) array of uniforms in [0, 1) for the given block."""
    return block_rng(seed, block, stream).random((rows, width))


def n_blocks(total: int, width: int) -> int:
    return -(-total // block_size(width))


def block_rows(total: int, width: int, block: int) -> int:
    """Number of rows the given block contributes to a run of `total` draws."""
    bs = block_size(width)
    return max(0, min(bs, total - block * bs))


def map_blocks(fn, count: int, workers: int = 1) -> list:
    """[fn(0), ..., fn(count - 1)], optionally computed by worker processes.

    `fn` must be picklable (module-level function or functools.partial of
    one). The returned list order never depends on the worker count.
    """
    if count <= 0:
        return []
    if workers <= 1 or count == 1:
        return [fn(b) for b in range(count)]
    workers = min(workers, count, os.cpu_count() or 1)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))
