import numpy as np
from numpy.testing import assert_array_equal

from roughdyadic.core.parallel import PATH_STREAM, Chunk, map_chunks, path_seeds, plan_chunks


def test_plan_chunks():
    chunks = plan_chunks(1050, 500, seed=4)
    assert [c.size for c in chunks] == [500, 500, 50]
    assert [c.start for c in chunks] == [0, 500, 1000]
    assert all(c.stream == 1 for c in chunks)
    assert plan_chunks(0, 10, seed=1) == []


def test_chunk_streams_are_distinct():
    a = Chunk(0, 0, 10, 7, 1).rng().standard_normal(10)
    b = Chunk(1, 10, 10, 7, 1).rng().standard_normal(10)
    c = Chunk(0, 0, 10, 7, 2).rng().standard_normal(10)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert_array_equal(a, Chunk(0, 0, 10, 7, 1).rng().standard_normal(10))


def test_map_chunks_independent_of_threads():
    chunks = plan_chunks(1000, 64, seed=11)

    def work(chunk):
        return chunk.rng().standard_normal(chunk.size).sum()

    serial = map_chunks(work, chunks, threads=1)
    for threads in (2, 4, 16):
        assert map_chunks(work, chunks, threads=threads) == serial


def test_path_seeds():
    seeds = path_seeds(3, 100)
    assert seeds.dtype == np.uint64
    assert len(set(seeds.tolist())) == 100
    assert_array_equal(path_seeds(3, 10), seeds[:10])
    assert not np.array_equal(path_seeds(4, 10), seeds[:10])
    assert PATH_STREAM == 0
