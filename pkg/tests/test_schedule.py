import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfiegen import schedule
from selfiegen.errors import InvalidInputError
from selfiegen.schedule import BlendConfig, NoiseSchedule


def constant_schedule(alpha_t, t=1, total=2):
    a = np.ones(total + 1)
    a[t:] = alpha_t
    return NoiseSchedule(a)


def test_schedule_validation():
    with pytest.raises(InvalidInputError):
        NoiseSchedule([1.0])
    with pytest.raises(InvalidInputError):
        NoiseSchedule([0.5, 0.7])
    with pytest.raises(InvalidInputError):
        NoiseSchedule([1.2, 0.0])
    lin = NoiseSchedule.linear()
    assert lin.total_steps == 50 and lin.alpha[0] == 1.0 and lin.alpha[-1] == 0.0


def test_forward_diffuse_examples():
    rng = np.random.default_rng(0)
    z0, eps = rng.standard_normal((2, 4, 8, 8))
    assert np.array_equal(schedule.forward_diffuse(z0, 0, eps, constant_schedule(0.0)), z0)
    assert np.array_equal(schedule.forward_diffuse(z0, 1, eps, constant_schedule(0.0)), eps)
    out = schedule.forward_diffuse(np.full((4, 8, 8), 2.0), 1, np.full((4, 8, 8), 10.0), constant_schedule(0.3))
    # 0.3 * 2 + 0.7 * 10
    np.testing.assert_allclose(out, 7.6, rtol=1e-15)


def test_forward_diffuse_errors():
    with pytest.raises(InvalidInputError):
        schedule.forward_diffuse(np.zeros((1, 2, 2)), 0, np.zeros((1, 2, 3)), NoiseSchedule.linear())
    with pytest.raises(InvalidInputError):
        schedule.forward_diffuse(np.zeros((1, 2, 2)), 51, np.zeros((1, 2, 2)), NoiseSchedule.linear())


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 50), st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3))
def test_forward_diffuse_is_linear(seed, t, a):
    rng = np.random.default_rng(seed)
    z0, eps = rng.standard_normal((2, 3, 5, 5))
    sched = NoiseSchedule.linear()
    lhs = schedule.forward_diffuse(a * z0, t, a * eps, sched)
    rhs = a * schedule.forward_diffuse(z0, t, eps, sched)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * abs(a))


def grids(seed=0, shape=(4, 8, 8)):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape), rng.standard_normal(shape)


def test_blend_boundary_and_full_mask():
    z_f, z_b = grids()
    checker = (np.indices((8, 8)).sum(axis=0) % 2).astype(bool)
    cfg = BlendConfig(checker)
    assert cfg.s == 0.4 and cfg.total_steps == 50
    assert np.array_equal(schedule.blend_step(z_f, z_b, cfg, 20), z_f)
    assert np.array_equal(schedule.blend_step(z_f, z_b, BlendConfig(np.ones((8, 8))), 21), z_f)
    out = schedule.blend_step(z_f, z_b, cfg, 21)
    for c in range(4):
        for y in range(8):
            for x in range(8):
                assert out[c, y, x] == (z_f if checker[y, x] else z_b)[c, y, x]


def test_blend_is_idempotent_and_respects_mask():
    z_f, z_b = grids(3)
    mask = np.random.default_rng(3).random((8, 8)) > 0.5
    cfg = BlendConfig(mask)
    for t in range(1, 51):
        once = schedule.blend_step(z_f, z_b, cfg, t)
        assert np.array_equal(once[:, mask], z_f[:, mask])
        if t > 20:
            assert np.array_equal(once[:, ~mask], z_b[:, ~mask])
            assert np.array_equal(schedule.blend_step(once, z_b, cfg, t), once)


def test_blend_shape_errors():
    z_f, z_b = grids()
    with pytest.raises(InvalidInputError):
        schedule.blend_step(z_f, z_b[:, :4], BlendConfig(np.ones((8, 8))), 30)
    with pytest.raises(InvalidInputError):
        schedule.blend_step(z_f, z_b, BlendConfig(np.ones((4, 4))), 30)
    with pytest.raises(InvalidInputError):
        BlendConfig(np.ones((8, 8)), s=1.5)


def test_downsample_mask():
    assert schedule.downsample_mask_to_latent(np.ones((64, 64), bool), (8, 8)).all()
    assert not schedule.downsample_mask_to_latent(np.zeros((64, 64), bool), (8, 8)).any()
    m = np.zeros((64, 64), bool)
    m[17, 42] = True
    out = schedule.downsample_mask_to_latent(m, (8, 8))
    assert out.sum() == 1 and out[2, 5]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 20), st.integers(1, 20))
def test_downsample_matches_block_oracle(seed, h, w):
    rng = np.random.default_rng(seed)
    big = (rng.integers(h, 60), rng.integers(w, 60))
    m = rng.random(big) > 0.95
    out = schedule.downsample_mask_to_latent(m, (h, w))
    for i in range(h):
        for j in range(w):
            r0, r1 = i * big[0] // h, -(-(i + 1) * big[0] // h)
            c0, c1 = j * big[1] // w, -(-(j + 1) * big[1] // w)
            assert out[i, j] == m[r0:r1, c0:c1].any()


def test_latent_and_schedule_io(tmp_path):
    z, _ = grids()
    schedule.save_latent(z, tmp_path / "z.raw")
    np.testing.assert_array_equal(schedule.load_latent(tmp_path / "z.raw"), z.astype(np.float32))
    (tmp_path / "s.json").write_text("[1.0, 0.5, 0.0]")
    assert schedule.load_schedule(tmp_path / "s.json").total_steps == 2
