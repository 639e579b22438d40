import numpy as np
import pytest

from acresnet import autodiff as ad
from acresnet.model import (Model, ModelSpec, WeightFormatError, build_model,
                            load_weights, save_weights)
from acresnet.tensor import ShapeError


def _rand_input(n=2, seed=0):
    return np.random.default_rng(seed).standard_normal((n, 3, 32, 32)).astype(np.float32)


class TestModelSpec:
    def test_depth_32_gives_15_blocks(self):
        spec = ModelSpec(depth=32)
        assert spec.blocks_per_stage == 5 and spec.total_blocks == 15

    def test_depth_8_gives_one_block_per_stage(self):
        spec = ModelSpec(depth=8)
        assert spec.blocks_per_stage == 1 and spec.total_blocks == 3

    def test_invalid_depth_rejected(self):
        for depth in (33, 10, 7, 0):
            with pytest.raises(ValueError):
                ModelSpec(depth=depth)


class TestBuildModel:
    def test_depth_20_parameter_count_closed_form(self):
        model = build_model(ModelSpec(depth=20, variant="classic"), seed=0)
        n = 3  # (20 - 2) / 6

        def conv(cin, cout, k):
            return cin * cout * k * k

        expected = conv(3, 16, 3) + 2 * 16  # stem conv + stem BN
        for cin, c in ((16, 16), (16, 32), (32, 64)):
            entry = conv(cin, c, 3) + 2 * c + conv(c, c, 3) + 2 * c
            if cin != c:
                entry += conv(cin, c, 1)  # projection shortcut
            rest = (n - 1) * (2 * conv(c, c, 3) + 4 * c)
            expected += entry + rest
        expected += 64 * 10 + 10  # dense head
        assert sum(p.value.size for p in model.parameters()) == expected

    def test_accumulated_adds_only_acc_bn_parameters(self):
        classic = build_model(ModelSpec(depth=14, variant="classic"), seed=3)
        accum = build_model(ModelSpec(depth=14, variant="accumulated"), seed=3)
        classic_n = sum(p.value.size for p in classic.parameters())
        accum_n = sum(p.value.size for p in accum.parameters())
        extra = sum(2 * b.spec.in_channels for b in accum.blocks)
        assert accum_n == classic_n + extra
        assert all(b.bn_acc is not None for b in accum.blocks)

    def test_shared_structure_identical_across_variants(self):
        classic = build_model(ModelSpec(depth=14, variant="classic"), seed=5)
        accum = build_model(ModelSpec(depth=14, variant="accumulated"), seed=5)
        assert np.array_equal(classic.stem_conv.kernel.value,
                              accum.stem_conv.kernel.value)
        for bc, ba in zip(classic.blocks, accum.blocks):
            assert np.array_equal(bc.conv1.kernel.value, ba.conv1.kernel.value)
            assert np.array_equal(bc.conv2.kernel.value, ba.conv2.kernel.value)
            if bc.projection is not None:
                assert np.array_equal(bc.projection.kernel.value,
                                      ba.projection.kernel.value)
        assert np.array_equal(classic.head.weight.value, accum.head.weight.value)

    def test_stage_boundaries_have_stride_2_and_double_channels(self):
        model = build_model(ModelSpec(depth=32), seed=0)
        for i, block in enumerate(model.blocks):
            if i in (5, 10):
                assert block.spec.stride == 2
                assert block.spec.out_channels == 2 * block.spec.in_channels
            else:
                assert block.spec.stride == 1
                assert block.spec.out_channels == block.spec.in_channels


class TestForward:
    def test_output_shape(self):
        model = build_model(ModelSpec(depth=8), seed=0)
        logits = model.forward(ad.Variable(_rand_input(3)), training=False)
        assert logits.value.shape == (3, 10)

    def test_inference_deterministic(self):
        model = build_model(ModelSpec(depth=8, variant="accumulated"), seed=1)
        x = _rand_input(2, seed=2)
        a = model.forward(ad.Variable(x), training=False).value
        b = model.forward(ad.Variable(x), training=False).value
        assert np.array_equal(a, b)

    def test_wrong_input_shape_rejected(self):
        model = build_model(ModelSpec(depth=8), seed=0)
        with pytest.raises(ShapeError):
            model.forward(ad.Variable(np.zeros((1, 3, 16, 16), np.float32)))

    def test_frozen_acc_bn_matches_classic_on_depth_8(self):
        # force every accumulator-path BN to emit its input: inference mode
        # with zero mean, unit variance (minus eps correction), gamma 1, beta 0
        seed = 11
        classic = build_model(ModelSpec(depth=8, variant="classic"), seed=seed)
        accum = build_model(ModelSpec(depth=8, variant="accumulated"), seed=seed)
        for block in accum.blocks:
            block.bn_acc.running_mean[:] = 0.0
            block.bn_acc.running_var[:] = 1.0 - block.bn_acc.eps
        x = ad.Variable(_rand_input(2, seed=12))
        y_classic = classic.forward(x, training=False).value
        y_accum = accum.forward(x, training=False).value
        assert np.allclose(y_classic, y_accum, atol=1e-5)

    def test_fresh_accumulator_per_call(self):
        model = build_model(ModelSpec(depth=8, variant="accumulated"), seed=0)
        model.forward(ad.Variable(_rand_input(2)), training=False)
        first = model.last_accumulator
        model.forward(ad.Variable(_rand_input(2)), training=False)
        assert model.last_accumulator is not first


class TestWeightIO:
    def test_round_trip_bit_exact(self, tmp_path):
        model = build_model(ModelSpec(depth=8, variant="accumulated"), seed=4)
        # perturb running stats so the round trip covers them
        model.blocks[0].bn1.running_mean[:] = 0.25
        path = tmp_path / "m.acrn"
        save_weights(model, path)
        loaded = load_weights(path)
        assert loaded.spec == model.spec
        for a, b in zip(model.state_arrays(), loaded.state_arrays()):
            assert np.array_equal(a, b)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.acrn"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_invalid_depth_header(self, tmp_path):
        model = build_model(ModelSpec(depth=8), seed=0)
        path = tmp_path / "m.acrn"
        save_weights(model, path)
        raw = bytearray(path.read_bytes())
        raw[8:12] = (33).to_bytes(4, "little")  # depth field
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightFormatError, match="6n"):
            load_weights(path)

    def test_truncated_file(self, tmp_path):
        model = build_model(ModelSpec(depth=8), seed=0)
        path = tmp_path / "m.acrn"
        save_weights(model, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        model = build_model(ModelSpec(depth=8), seed=0)
        path = tmp_path / "m.acrn"
        save_weights(model, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(WeightFormatError, match="trailing"):
            load_weights(path)
