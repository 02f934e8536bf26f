import numpy as np
import pytest

from app.exceptions.lab import GridError
from app.services.snapshots import SnapshotServices


class TestSnapshots:
    def test_write_then_read(self, grid32, rng, tmp_path):
        fields = [rng.standard_normal((32, 32)) for _ in range(3)]
        path = SnapshotServices.write(tmp_path / "nested" / "s.mlf", grid32, fields)
        grid, loaded = SnapshotServices.read(path)
        assert grid == grid32
        for a, b in zip(loaded, fields):
            np.testing.assert_array_equal(a, b)

    def test_layout(self, grid32, tmp_path):
        path = SnapshotServices.write(tmp_path / "s.mlf", grid32, [np.zeros((32, 32))])
        data = path.read_bytes()
        assert data[:4] == b"MLF1"
        assert len(data) == 4 + 4 + 8 + 4 + 32 * 32 * 8

    def test_rejects_wrong_shape(self, grid32, tmp_path):
        with pytest.raises(GridError):
            SnapshotServices.write(tmp_path / "s.mlf", grid32, [np.zeros((16, 16))])

    def test_late_bad_shape_leaves_no_file(self, grid32, tmp_path):
        fields = [np.zeros((32, 32)), np.ones((32, 32)), np.zeros((32, 31))]
        with pytest.raises(GridError):
            SnapshotServices.write(tmp_path / "deep" / "s.mlf", grid32, fields)
        assert not (tmp_path / "deep" / "s.mlf").exists()

    def test_bad_shape_keeps_previous_snapshot(self, grid32, tmp_path):
        path = SnapshotServices.write(tmp_path / "s.mlf", grid32, [np.ones((32, 32))])
        before = path.read_bytes()
        with pytest.raises(GridError):
            SnapshotServices.write(path, grid32, [np.zeros((32, 32)), np.zeros((8, 8))])
        assert path.read_bytes() == before

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.mlf"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(GridError):
            SnapshotServices.read(path)

    def test_rejects_truncated_file(self, grid32, tmp_path):
        path = SnapshotServices.write(tmp_path / "s.mlf", grid32, [np.ones((32, 32))])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(GridError):
            SnapshotServices.read(path)
