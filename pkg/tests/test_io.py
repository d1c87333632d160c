import numpy as np
import pytest

from nformer.exceptions import DataFormatError
from nformer.io import (
    read_dataset,
    read_features,
    read_weights,
    write_dataset,
    write_features,
    write_weights,
)
from nformer.retrieval import GenParams, synth_generate
from nformer.stack import LayerWeights, random_weights


@pytest.fixture
def features():
    return np.random.default_rng(0).normal(size=(7, 3))


class TestFeatureFiles:
    def test_binary_round_trip_is_exact(self, features, tmp_path):
        path = tmp_path / "feats.nfmt"
        write_features(path, features)
        back = read_features(path)
        assert back.tobytes() == features.tobytes()

    def test_csv_round_trip_is_exact(self, features, tmp_path):
        path = tmp_path / "feats.csv"
        write_features(path, features)
        back = read_features(path)
        assert back.tobytes() == features.tobytes()

    def test_binary_layout(self, features, tmp_path):
        path = tmp_path / "feats.nfmt"
        write_features(path, features)
        raw = path.read_bytes()
        assert raw[:4] == b"NFMT"
        assert raw[4] == 1
        assert int.from_bytes(raw[5:9], "little") == 7
        assert int.from_bytes(raw[9:13], "little") == 3
        assert len(raw) == 13 + 7 * 3 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.nfmt"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(DataFormatError):
            read_features(path)

    def test_truncated_rejected(self, features, tmp_path):
        path = tmp_path / "feats.nfmt"
        write_features(path, features)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataFormatError):
            read_features(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_features(tmp_path / "nope.nfmt")

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0,not-a-number\n")
        with pytest.raises(DataFormatError):
            read_features(path)


class TestWeightFiles:
    def test_round_trip_is_exact(self, tmp_path):
        weights = random_weights(5, layers=3, seed=4)
        path = tmp_path / "w.nfwt"
        write_weights(path, weights)
        back = read_weights(path)
        assert len(back) == 3
        for a, b in zip(weights, back):
            assert a.projections.w_q.tobytes() == b.projections.w_q.tobytes()
            assert a.projections.w_k.tobytes() == b.projections.w_k.tobytes()
            assert a.projections.w_v.tobytes() == b.projections.w_v.tobytes()
            assert a.ff1.tobytes() == b.ff1.tobytes()
            assert a.b1.tobytes() == b.b1.tobytes()
            assert a.ff2.tobytes() == b.ff2.tobytes()
            assert a.b2.tobytes() == b.b2.tobytes()

    def test_magic_and_header(self, tmp_path):
        path = tmp_path / "w.nfwt"
        write_weights(path, [LayerWeights.identity(4)])
        raw = path.read_bytes()
        assert raw[:4] == b"NFWT"
        assert raw[4] == 1
        assert int.from_bytes(raw[5:9], "little") == 1   # layers
        assert int.from_bytes(raw[9:13], "little") == 4  # d

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "w.nfwt"
        write_features(tmp_path / "f.nfmt", np.ones((2, 2)))
        path.write_bytes((tmp_path / "f.nfmt").read_bytes())
        with pytest.raises(DataFormatError):
            read_weights(path)


class TestDatasetSidecar:
    def test_round_trip(self, tmp_path):
        ds = synth_generate(GenParams(identities=3, images_per_identity=4, dim=5, seed=9))
        write_dataset(ds, tmp_path / "d.nfmt", tmp_path / "d.labels.csv")
        back = read_dataset(tmp_path / "d.nfmt", tmp_path / "d.labels.csv")
        assert back.features.tobytes() == ds.features.tobytes()
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.roles, ds.roles)
        np.testing.assert_array_equal(back.outlier_flags, ds.outlier_flags)

    def test_sidecar_header(self, tmp_path):
        ds = synth_generate(GenParams(identities=2, images_per_identity=3, dim=4, seed=1))
        write_dataset(ds, tmp_path / "d.nfmt", tmp_path / "d.labels.csv")
        first = (tmp_path / "d.labels.csv").read_text().splitlines()[0]
        assert first == "index,label,role,outlier"

    def test_row_count_mismatch_rejected(self, tmp_path):
        ds = synth_generate(GenParams(identities=2, images_per_identity=3, dim=4, seed=2))
        write_dataset(ds, tmp_path / "d.nfmt", tmp_path / "d.labels.csv")
        text = (tmp_path / "d.labels.csv").read_text().splitlines()
        (tmp_path / "d.labels.csv").write_text("\n".join(text[:-1]) + "\n")
        with pytest.raises(DataFormatError):
            read_dataset(tmp_path / "d.nfmt", tmp_path / "d.labels.csv")
