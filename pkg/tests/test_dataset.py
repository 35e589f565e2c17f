"""
Test suite for the dataset module.

This suite includes tests for:
- Writing and validating RTSD shard files
- Logging teacher trajectories into a dataset
- Episode-aware sequence windows and batch iteration
- Train/validation splits over env streams
"""

__author__ = "RoverNav Developers"
__copyright__ = "Copyright 2026, RoverNav Developers"
__credits__ = ["RoverNav Developers"]
__license__ = "CC BY-NC-SA 4.0"
__version__ = "1.0.0"
__maintainer__ = "RoverNav Developers"
__status__ = "Development"
__date__ = '17.10.2026'
__url__ = "https://github.com/rovernav/rovernav"

import errno

import numpy as np
import pytest

from rovernav import dataset as ds
from rovernav.obs import ObservationBatch
from rovernav.teacher import TeacherNet

K_DENSE, K_SPARSE = 25, 44


def _write_shard(path, env_count, steps, done):
    """Synthetic shard; proprio[0] encodes (env, step) as 1000 * env + step."""
    done = np.asarray(done, dtype=bool)
    with ds.ShardWriter(path, env_count, steps, K_DENSE, K_SPARSE) as writer:
        for t in range(steps):
            proprio = np.zeros((env_count, 4))
            proprio[:, 0] = 1000 * np.arange(env_count) + t
            writer.write_step(t, proprio, np.zeros((env_count, K_DENSE)), np.zeros((env_count, K_SPARSE)),
                              np.zeros((env_count, 2)), done[:, t])
    return ds.ShardReader(path)


def test_collect_writes_dataset(tmp_path, flat_sim, coarse_pattern, tiny_teacher_arch):
    """
    Test the collect function:
    - Two envs for ten steps give 20 records in one shard plus a manifest.
    - The logged actions are the clamped teacher means.
    - A second run with the same seed writes identical bytes.
    """
    teacher = TeacherNet(coarse_pattern.k_dense, coarse_pattern.k_sparse, tiny_teacher_arch, seed=0)
    result = ds.collect(teacher, flat_sim, env_count=2, steps=10, out_dir=tmp_path / 'a', seed=4)
    assert result.records == 20 and len(result.shards) == 1

    manifest, readers = ds.open_dataset(tmp_path / 'a')
    assert manifest['records'] == 20 and manifest['k_dense'] == coarse_pattern.k_dense
    reader = readers[0]
    assert (reader.env_count, reader.steps, len(reader)) == (2, 10, 20)
    first = reader.records[:, 0]
    obs = ObservationBatch(first['proprio'].astype(np.float64), first['dense'].astype(np.float64),
                           first['sparse'].astype(np.float64))
    np.testing.assert_allclose(first['action'], teacher.act(obs), atol=1e-5)

    again = ds.collect(teacher, flat_sim, env_count=2, steps=10, out_dir=tmp_path / 'b', seed=4)
    assert again.shards[0].read_bytes() == result.shards[0].read_bytes()

    with pytest.raises(ValueError):
        ds.collect(TeacherNet(10, 10, tiny_teacher_arch), flat_sim, 2, 10, tmp_path / 'c')


def test_collect_splits_shards(tmp_path, flat_sim, coarse_pattern, tiny_teacher_arch):
    """
    Test the shard layout of collect:
    - Envs are spread over shards of at most shard_envs streams.
    """
    teacher = TeacherNet(coarse_pattern.k_dense, coarse_pattern.k_sparse, tiny_teacher_arch)
    result = ds.collect(teacher, flat_sim, env_count=5, steps=3, out_dir=tmp_path, shard_envs=2)
    _, readers = ds.open_dataset(tmp_path)
    assert [r.env_count for r in readers] == [2, 2, 1]
    assert len(ds.all_streams(readers)) == 5
    assert result.records == 15


def test_shard_reader_errors(tmp_path):
    """
    Test ShardReader validation:
    - A missing file raises FileNotFoundError.
    - A wrong magic, a truncated file and a short header raise ShardFormatError.
    """
    with pytest.raises(FileNotFoundError):
        ds.ShardReader(tmp_path / 'missing.rtsd')

    path = tmp_path / 'shard.rtsd'
    _write_shard(path, 2, 5, np.zeros((2, 5)))
    data = path.read_bytes()

    path.write_bytes(b'XXXX' + data[4:])
    with pytest.raises(ds.ShardFormatError):
        ds.ShardReader(path)
    path.write_bytes(data[:-10])
    with pytest.raises(ds.ShardFormatError):
        ds.ShardReader(path)
    path.write_bytes(data[:8])
    with pytest.raises(ds.ShardFormatError):
        ds.ShardReader(path)


def test_shard_writer_discards_on_os_error(tmp_path):
    """
    Test ShardWriter cleanup:
    - An OSError inside the context removes the partial file and propagates.
    - Writing outside the step range is rejected.
    """
    path = tmp_path / 'partial.rtsd'
    with pytest.raises(OSError):
        with ds.ShardWriter(path, 2, 4, K_DENSE, K_SPARSE) as writer:
            assert path.exists()
            raise OSError("disk full")
    assert not path.exists()

    with ds.ShardWriter(tmp_path / 'ok.rtsd', 1, 2, K_DENSE, K_SPARSE) as writer:
        with pytest.raises(IndexError):
            writer.write_step(2, np.zeros((1, 4)), np.zeros((1, K_DENSE)), np.zeros((1, K_SPARSE)),
                              np.zeros((1, 2)), np.zeros(1))


def _no_space(fd, offset, length):
    raise OSError(errno.ENOSPC, "No space left on device")


def test_shard_writer_discards_on_any_error(tmp_path):
    """
    Test that a failure other than an OSError also removes the partial shard.
    """
    path = tmp_path / 'partial.rtsd'
    with pytest.raises(RuntimeError):
        with ds.ShardWriter(path, 2, 4, K_DENSE, K_SPARSE):
            raise RuntimeError("teacher failed")
    assert not path.exists()


def test_shard_writer_disk_full(tmp_path, monkeypatch):
    """
    Test ShardWriter on a full disk:
    - Allocation fails on open with ENOSPC and leaves no file behind.
    """
    monkeypatch.setattr(ds.os, 'posix_fallocate', _no_space, raising=False)
    path = tmp_path / 'full.rtsd'
    with pytest.raises(OSError) as info:
        ds.ShardWriter(path, 2, 4, K_DENSE, K_SPARSE).open()
    assert info.value.errno == errno.ENOSPC
    assert not path.exists()


def _unsupported(fd, offset, length):
    raise OSError(errno.EOPNOTSUPP, "Operation not supported")


@pytest.mark.parametrize('fallocate', [None, _unsupported])
def test_shard_writer_allocates_without_fallocate(tmp_path, monkeypatch, fallocate):
    """
    Test the zero-fill allocation used when posix_fallocate is missing or unsupported:
    - The file has its final size after open and reads back after writing.
    """
    if fallocate is None:
        monkeypatch.delattr(ds.os, 'posix_fallocate', raising=False)
    else:
        monkeypatch.setattr(ds.os, 'posix_fallocate', fallocate, raising=False)
    path = tmp_path / 'zero.rtsd'
    with ds.ShardWriter(path, 2, 3, K_DENSE, K_SPARSE) as writer:
        assert path.stat().st_size == writer.header.file_size
        for t in range(3):
            writer.write_step(t, np.full((2, 4), t), np.zeros((2, K_DENSE)), np.zeros((2, K_SPARSE)),
                              np.zeros((2, 2)), np.zeros(2))
    reader = ds.ShardReader(path)
    np.testing.assert_array_equal(reader.records['proprio'][1, :, 0], [0.0, 1.0, 2.0])


def test_collect_disk_full_leaves_no_shards(tmp_path, monkeypatch, flat_sim, coarse_pattern, tiny_teacher_arch):
    """
    Test collect on a full disk:
    - The OSError reaches the caller.
    - No shard and no dataset manifest stay on disk.
    """
    teacher = TeacherNet(coarse_pattern.k_dense, coarse_pattern.k_sparse, tiny_teacher_arch)
    monkeypatch.setattr(ds.os, 'posix_fallocate', _no_space, raising=False)
    with pytest.raises(OSError):
        ds.collect(teacher, flat_sim, env_count=4, steps=3, out_dir=tmp_path, shard_envs=2)
    assert not list(tmp_path.glob(f'*{ds.SHARD_SUFFIX}'))
    assert not (tmp_path / ds.DATASET_MANIFEST).exists()


def test_valid_starts():
    """
    Test the valid_starts function:
    - A window may end on a done step but never contain one before its last element.
    - Random done patterns agree with a brute-force scan.
    """
    done = np.array([0, 0, 1, 0, 0, 0, 1, 0], dtype=bool)
    np.testing.assert_array_equal(ds.valid_starts(done, 3), [0, 3, 4])
    np.testing.assert_array_equal(ds.valid_starts(done, 1), np.arange(8))
    assert ds.valid_starts(done, 9).size == 0

    rng = np.random.default_rng(0)
    for _ in range(20):
        done = rng.random(30) < 0.15
        seq_len = int(rng.integers(1, 8))
        expected = [s for s in range(30 - seq_len + 1) if not done[s:s + seq_len - 1].any()]
        np.testing.assert_array_equal(ds.valid_starts(done, seq_len), expected)


def test_sequence_iter_yields_each_record_once(tmp_path):
    """
    Test sequence_iter with length-one sequences:
    - Every record of the dataset is yielded exactly once per epoch.
    - The last batch holds the remainder.
    """
    reader = _write_shard(tmp_path / 's.rtsd', 2, 10, np.zeros((2, 10)))
    batches = list(ds.sequence_iter([reader], 1, 7, np.random.default_rng(0)))
    assert [len(b) for b in batches] == [7, 7, 6]
    seen = np.concatenate([b.proprio[:, 0, 0] for b in batches])
    assert sorted(seen.tolist()) == sorted([1000.0 * e + t for e in range(2) for t in range(10)])


def test_sequence_windows_respect_episodes(tmp_path):
    """
    Test sequence windows on a shard with episode ends:
    - The number of windows matches the count from valid_starts.
    - Every window is contiguous and a done flag can only sit on its last step.
    - max_batches caps the epoch.
    """
    rng = np.random.default_rng(1)
    done = rng.random((3, 40)) < 0.1
    reader = _write_shard(tmp_path / 's.rtsd', 3, 40, done)
    seq_len = 4
    expected = sum(ds.valid_starts(done[e], seq_len).size for e in range(3))
    batches = list(ds.sequence_iter([reader], seq_len, 16, rng))
    assert sum(len(b) for b in batches) == expected
    for batch in batches:
        assert batch.seq_len == seq_len
        assert not batch.done[:, :-1].any()
        np.testing.assert_array_equal(np.diff(batch.proprio[:, :, 0], axis=1), 1.0)
    assert len(list(ds.sequence_iter([reader], seq_len, 4, rng, max_batches=2))) == 2


def test_sequence_index_errors(tmp_path):
    """
    Test sequence_index failures:
    - A sequence longer than the logged steps is rejected.
    - Episodes that are all shorter than the sequence are rejected.
    """
    reader = _write_shard(tmp_path / 'short.rtsd', 2, 6, np.ones((2, 6)))
    with pytest.raises(ValueError):
        ds.sequence_index([reader], 7)
    with pytest.raises(ValueError):
        ds.sequence_index([reader], 2)
    assert ds.sequence_index([reader], 1).shape == (12, 3)


def test_split_streams(tmp_path):
    """
    Test the split_streams function:
    - 20 streams with a 0.1 fraction give 2 validation streams, disjoint from training.
    - The split is stable for a seed.
    - A single stream gives an empty validation set.
    """
    readers = [_write_shard(tmp_path / f's{i}.rtsd', 10, 3, np.zeros((10, 3))) for i in range(2)]
    train, val = ds.split_streams(readers, 0.1, seed=3)
    assert len(val) == 2 and len(train) == 18
    assert not set(train) & set(val)
    assert sorted(train + val) == ds.all_streams(readers)
    assert ds.split_streams(readers, 0.1, seed=3) == (train, val)

    single = [_write_shard(tmp_path / 'one.rtsd', 1, 3, np.zeros((1, 3)))]
    assert ds.split_streams(single, 0.1) == ([(0, 0)], [])
    with pytest.raises(ValueError):
        ds.split_streams(readers, 1.0)


def test_open_dataset_detects_changes(tmp_path, flat_sim, coarse_pattern, tiny_teacher_arch):
    """
    Test open_dataset integrity checks:
    - A shard whose content changed after logging is rejected.
    - A missing manifest raises FileNotFoundError.
    """
    teacher = TeacherNet(coarse_pattern.k_dense, coarse_pattern.k_sparse, tiny_teacher_arch)
    result = ds.collect(teacher, flat_sim, env_count=2, steps=4, out_dir=tmp_path / 'data')
    data = bytearray(result.shards[0].read_bytes())
    data[-1] ^= 0x01
    result.shards[0].write_bytes(bytes(data))
    with pytest.raises(ds.ShardFormatError):
        ds.open_dataset(tmp_path / 'data')
    with pytest.raises(FileNotFoundError):
        ds.open_dataset(tmp_path / 'nothing')
