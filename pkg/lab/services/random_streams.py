# lab/services/random_streams.py
"""Substream derivation: run seed -> stream kind -> keys (K, seed, node...)."""
import numpy as np

IBM_STREAM = 1
MILD_STREAM = 2
DENSITY_STREAM = 3
COUPLING_STREAM = 4
INITIAL_STREAM = 5


def substream(run_seed, stream, *keys):
    seed_sequence = np.random.SeedSequence(
        entropy=int(run_seed), spawn_key=(int(stream),) + tuple(int(k) for k in keys),
    )
    return np.random.default_rng(seed_sequence)


def ibm_stream(run_seed, capacity, seed):
    return substream(run_seed, IBM_STREAM, capacity, seed)
