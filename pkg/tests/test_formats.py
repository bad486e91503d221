"""On-disk containers: roundtrips, strict rejection, calibration."""

import json
import struct

import numpy as np
import pytest

from conftest import batch_input, lenet_style, random_mlp
from pfp import (BadMagic, ConventionMismatch, Dense, GaussianWeights,
                 ManifestError, ModelGraph, NegativeVariance, PfpError,
                 SpreadKind, UnsupportedVersion, apply_calibration, forward,
                 load_model, load_tensor, save_model, save_tensor)


@pytest.fixture
def model(tmp_path):
    rng = np.random.default_rng(42)
    return random_mlp(rng, [6, 8, 3], bias="probabilistic")


class TestModelRoundtrip:
    def test_save_load_save_is_byte_identical(self, model, tmp_path):
        p1, p2 = tmp_path / "a.pfpm", tmp_path / "b.pfpm"
        save_model(model, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_saving_twice_is_deterministic(self, model, tmp_path):
        p1, p2 = tmp_path / "a.pfpm", tmp_path / "b.pfpm"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_calibration_factor_persisted(self, model, tmp_path):
        p = tmp_path / "c.pfpm"
        save_model(apply_calibration(model, 0.375), p)
        assert load_model(p).calibration_factor == pytest.approx(
            0.375, rel=1e-7)  # survives the float32 payload-independent field

    def test_empty_model_rejected_on_save(self, tmp_path):
        with pytest.raises(ConventionMismatch):
            ModelGraph("empty", (3,), ()).plan()
        with pytest.raises(ManifestError):
            save_model(ModelGraph("empty", (3,), ()), tmp_path / "e.pfpm")

    def test_loader_converts_weight_kinds(self, tmp_path):
        rng = np.random.default_rng(1)
        m = random_mlp(rng, [4, 5, 2], relu=False)
        p = tmp_path / "k.pfpm"
        save_model(m, p)
        loaded = load_model(p)
        assert loaded.layers[0].weights.kind is SpreadKind.VARIANCE
        assert loaded.layers[1].weights.kind is SpreadKind.SECOND_RAW_MOMENT

    def test_lenet_roundtrip_forward_agrees(self, tmp_path):
        rng = np.random.default_rng(2)
        m = lenet_style(rng)
        x = batch_input(rng, m, 2)
        p = tmp_path / "l.pfpm"
        save_model(m, p)
        d1, d2 = forward(m, x), forward(load_model(p), x)
        np.testing.assert_allclose(d1.logit_mean, d2.logit_mean, atol=1e-5)
        np.testing.assert_allclose(d1.logit_var, d2.logit_var, atol=1e-6)


class TestModelRejection:
    def test_bad_magic(self, model, tmp_path):
        p = tmp_path / "m.pfpm"
        save_model(model, p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(BadMagic):
            load_model(p)

    def test_unsupported_version(self, model, tmp_path):
        p = tmp_path / "m.pfpm"
        save_model(model, p)
        raw = bytearray(p.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersion):
            load_model(p)

    def test_element_count_lie(self, model, tmp_path):
        p = tmp_path / "m.pfpm"
        save_model(model, p)
        raw = p.read_bytes()
        mlen = struct.unpack_from("<Q", raw, 8)[0]
        manifest = json.loads(raw[16:16 + mlen])
        manifest["layers"][0]["tensors"]["weight_mean"]["shape"] = [8, 7]
        blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        p.write_bytes(raw[:8] + struct.pack("<Q", len(blob)) + blob + raw[16 + mlen:])
        with pytest.raises(ManifestError):
            load_model(p)

    def test_truncated_payload(self, model, tmp_path):
        p = tmp_path / "m.pfpm"
        save_model(model, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-5])
        with pytest.raises(ManifestError):
            load_model(p)

    def test_negative_variance_payload(self, model, tmp_path):
        p = tmp_path / "m.pfpm"
        save_model(model, p)
        raw = p.read_bytes()
        mlen = struct.unpack_from("<Q", raw, 8)[0]
        manifest = json.loads(raw[16:16 + mlen])
        off = manifest["layers"][0]["tensors"]["weight_variance"]["offset"]
        body = bytearray(raw)
        struct.pack_into("<f", body, 16 + mlen + off, -0.25)
        p.write_bytes(bytes(body))
        with pytest.raises(NegativeVariance):
            load_model(p)

    def test_convention_breaking_chain(self, tmp_path):
        # relu moved before the first compute layer
        rng = np.random.default_rng(3)
        m = random_mlp(rng, [4, 5, 2])
        p = tmp_path / "m.pfpm"
        save_model(m, p)
        raw = p.read_bytes()
        mlen = struct.unpack_from("<Q", raw, 8)[0]
        manifest = json.loads(raw[16:16 + mlen])
        kinds = [l["kind"] for l in manifest["layers"]]
        relu = manifest["layers"].pop(kinds.index("relu"))
        manifest["layers"].insert(0, relu)
        blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        p.write_bytes(raw[:8] + struct.pack("<Q", len(blob)) + blob + raw[16 + mlen:])
        with pytest.raises(ConventionMismatch):
            load_model(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "nope.pfpm")


class TestTensorFile:
    def test_rank0_scalar_roundtrip(self, tmp_path):
        p = tmp_path / "s.pfpt"
        save_tensor(np.array(2.5), p)
        t = load_tensor(p)
        assert t.shape == () and t.values[()] == 2.5

    def test_row_major_payload_layout(self, tmp_path):
        p = tmp_path / "t.pfpt"
        arr = np.arange(6.0).reshape(2, 3)
        save_tensor(arr, p)
        raw = p.read_bytes()
        header = 4 + 4 + 4 + 2 * 8 + 4
        # element (1, 2) sits at payload offset 5 * 4 bytes
        val = struct.unpack_from("<f", raw, header + 5 * 4)[0]
        assert val == 5.0
        np.testing.assert_array_equal(load_tensor(p).values, arr)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.pfpt"
        save_tensor(np.zeros((4, 4)), p)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(ManifestError):
            load_tensor(p)

    def test_wrong_dtype_code(self, tmp_path):
        p = tmp_path / "t.pfpt"
        save_tensor(np.zeros(3), p)
        raw = bytearray(p.read_bytes())
        struct.pack_into("<I", raw, 12 + 8, 7)
        p.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersion):
            load_tensor(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "t.pfpt"
        p.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(BadMagic):
            load_tensor(p)


class TestCalibration:
    def test_identity_factor(self, model):
        out = apply_calibration(model, 1.0)
        for la, lb in zip(model.layers, out.layers):
            if isinstance(la, Dense):
                np.testing.assert_array_equal(la.weights.variances(),
                                              lb.weights.variances())

    def test_factor_scales_each_variance(self):
        w = GaussianWeights.from_moments([[1.0]], [[2.0]])
        m = ModelGraph("m", (1,), (Dense(w),))
        out = apply_calibration(m, 0.3)
        assert out.layers[0].weights.variances()[0, 0] == pytest.approx(0.6, rel=1e-15)

    def test_composition_within_ulp(self, model):
        a = apply_calibration(apply_calibration(model, 0.4), 0.7)
        b = apply_calibration(model, 0.4 * 0.7)
        for la, lb in zip(a.layers, b.layers):
            if isinstance(la, Dense):
                va, vb = la.weights.variances(), lb.weights.variances()
                assert np.all(np.abs(va - vb) <= np.spacing(np.maximum(va, vb)))

    def test_means_and_argmax_unchanged_on_linear_model(self):
        rng = np.random.default_rng(4)
        m = random_mlp(rng, [5, 6, 4], relu=False, bias="deterministic")
        x = batch_input(rng, m, 8)
        d1 = forward(m, x)
        d2 = forward(apply_calibration(m, 0.4), x)
        np.testing.assert_array_equal(d1.logit_mean, d2.logit_mean)
        assert np.array_equal(d1.logit_mean.argmax(axis=1), d2.logit_mean.argmax(axis=1))

    def test_single_layer_variance_scales_exactly(self):
        rng = np.random.default_rng(5)
        m = random_mlp(rng, [4, 3], relu=False)
        x = batch_input(rng, m, 4)
        v1 = forward(m, x).logit_var
        v2 = forward(apply_calibration(m, 0.3), x).logit_var
        np.testing.assert_allclose(v2, 0.3 * v1, rtol=1e-14)

    def test_srm_kind_weights_scaled_through_variance(self):
        w = GaussianWeights.from_moments([[1.0, 2.0]], [[0.5, 0.5]]).with_kind(
            SpreadKind.SECOND_RAW_MOMENT)
        m = ModelGraph("m", (2,), (Dense(w),))
        out = apply_calibration(m, 2.0)
        assert out.layers[0].weights.kind is SpreadKind.SECOND_RAW_MOMENT
        np.testing.assert_allclose(out.layers[0].weights.variances(),
                                   [[1.0, 1.0]], rtol=1e-12)

    def test_nonpositive_factor_rejected(self, model):
        for bad in (0.0, -1.0):
            with pytest.raises(PfpError):
                apply_calibration(model, bad)
