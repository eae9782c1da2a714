"""Seeded, splittable random streams and the samplers used by every engine.

A stream is addressed by (seed, stream_id[, child ids...]). The address is
hashed by numpy's SeedSequence into a Philox key, so the same address gives
the same draws on every platform and under any worker schedule.

Monte Carlo loops are cut into fixed-size blocks of iterations; block k
always draws from substream(seed, k), whatever the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np

from modules.errors import DomainError


DEFAULT_SEED = 20230401

# Iterations simulated per substream.
DEFAULT_BLOCK_SIZE = 1 << 15

MASK64 = (1 << 64) - 1


class RandomStream:
    """Deterministic random stream identified by (seed, stream_id, path)."""

    def __init__(self, seed: int, stream_id: int = 0, path=()) -> None:
        if seed < 0 or stream_id < 0 or any(i < 0 for i in path):
            raise DomainError(f'Stream address must be non-negative ({seed}, {stream_id}, {path})')

        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.path = tuple(int(i) & MASK64 for i in path)

        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,) + self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, child_id: int):
        """Independent stream nested under this one (fresh state, not a fork of the current one)."""
        return RandomStream(self.seed, self.stream_id, self.path + (child_id,))

    def derive_seed(self) -> int:
        """Draw a 63-bit seed, to hand a sub-computation its own seed."""
        return int(self._gen.integers(0, 1 << 63))

    def __repr__(self) -> str:
        return f'RandomStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})'


def substream(seed: int, stream_id: int) -> RandomStream:
    """Return the stream for (seed, stream_id)."""
    return RandomStream(seed, stream_id)


def _check_positive(name, value):
    if not np.all(np.asarray(value, dtype=float) > 0.0):
        raise DomainError(f'{name} must be > 0 ({value!r})')


def sample_beta(alpha, beta, stream: RandomStream, size=None):
    """Draw from Beta(alpha, beta). Improper parameters (<= 0) are rejected."""
    _check_positive('alpha', alpha)
    _check_positive('beta', beta)
    return stream.generator.beta(alpha, beta, size=size)


def sample_binomial(trials, p, stream: RandomStream, size=None):
    """Draw from Binomial(trials, p); 0 trials gives 0."""
    trials_arr = np.asarray(trials)
    p_arr = np.asarray(p, dtype=float)
    if np.any(trials_arr < 0):
        raise DomainError(f'Number of trials must be >= 0 ({trials!r})')
    if not np.all((p_arr >= 0.0) & (p_arr <= 1.0)):
        raise DomainError(f'Success probability must be in [0, 1] ({p!r})')
    return stream.generator.binomial(trials_arr, p_arr, size=size)


def sample_multinomial(trials, pvals, stream: RandomStream):
    """Category counts of `trials` draws; `pvals` rows (last axis) sum to 1."""
    if np.any(np.asarray(trials) < 0):
        raise DomainError(f'Number of trials must be >= 0 ({trials!r})')
    return stream.generator.multinomial(trials, pvals)


def sample_uniform(stream: RandomStream, size=None):
    return stream.generator.random(size=size)


def dirichlet_weights(n: int, stream: RandomStream, size=None):
    """Bayesian bootstrap weights: Dirichlet(1, ..., 1) over n records.

    Each weight is a standard exponential draw divided by the row sum.
    With `size`, returns an array of shape (size, n).
    """
    if n < 1:
        raise DomainError(f'Number of records must be >= 1 ({n})')
    shape = (n,) if size is None else (size, n)
    draws = stream.generator.standard_exponential(shape)
    return draws / draws.sum(axis=-1, keepdims=True)


def multinomial_counts(n: int, stream: RandomStream, size=None):
    """How many times each of n records is picked in n draws with replacement."""
    if n < 1:
        raise DomainError(f'Number of records must be >= 1 ({n})')
    rows = 1 if size is None else size
    picks = stream.generator.integers(0, n, size=(rows, n))
    offsets = np.arange(rows)[:, None] * n
    counts = np.bincount((picks + offsets).ravel(), minlength=rows * n).reshape(rows, n)
    return counts[0] if size is None else counts


def multinomial_weights(n: int, stream: RandomStream, size=None):
    """Ordinary bootstrap weights: multinomial counts scaled by 1/n."""
    return multinomial_counts(n, stream, size=size) / n


def iter_blocks(n_sims: int, block_size: int = DEFAULT_BLOCK_SIZE):
    """Yield (block_id, start, stop) covering range(n_sims)."""
    for block_id, start in enumerate(range(0, n_sims, block_size)):
        yield block_id, start, min(start + block_size, n_sims)


def run_blocks(task, n_sims: int, seed: int, workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE):
    """Run task(stream, start, stop) over every block, in block order.

    Args:
        task (Callable): called once per block with that block's substream.
        n_sims (int): total number of iterations.
        seed (int): master seed.
        workers (int, optional): worker threads. Defaults to 1.
        block_size (int, optional): iterations per block.

    Returns:
        list: task results, ordered by block id.
    """
    blocks = list(iter_blocks(n_sims, block_size))
    logging.debug('Run %d iterations in %d blocks on %d worker(s)', n_sims, len(blocks), workers)

    def _call(block):
        block_id, start, stop = block
        return task(substream(seed, block_id), start, stop)

    if workers <= 1 or len(blocks) <= 1:
        return [_call(block) for block in blocks]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map keeps the input order
        return list(pool.map(_call, blocks))
