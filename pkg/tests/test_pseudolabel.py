import sys

import numpy as np
import pytest

from cordpipe import (
    MockPredictor,
    PhantomConfig,
    RegionStack,
    Spacing,
    SubprocessPredictor,
    TtaConfig,
    ensemble,
    generate,
    jitter_score,
    perturb_slices,
    predict_volume,
    predict_with_tta,
    stack_slices,
)
from cordpipe.errors import DimensionError, ValidationError
from cordpipe.pseudolabel import SlicePredictor, _flip

ISO = Spacing.isotropic()


def _mock():
    return MockPredictor({0: (0.0, 0.5), 1: (0.4, 0.2), 2: (0.6, 0.8),
                          3: (0.85, 0.5), 4: (0.95, 0.9)})


class PatternPredictor(SlicePredictor):
    """Deliberately not flip-equivariant: output depends on position."""

    def predict(self, magnitude, phase=None):
        h, w = magnitude.shape
        ramp = np.tile(np.linspace(0, 1, w), (h, 1)).astype(np.float32)
        return RegionStack(ramp, 1 - ramp, np.zeros_like(ramp))


class WrongShapePredictor(SlicePredictor):
    def predict(self, magnitude, phase=None):
        z = np.zeros((2, 2), np.float32)
        return RegionStack(z, z, z)


def test_tta_noop_for_equivariant_predictor():
    rng = np.random.default_rng(70)
    mag = rng.random((12, 12)).astype(np.float32)
    phs = rng.random((12, 12)).astype(np.float32)
    pred = _mock()
    plain = pred.predict(mag, phs)
    tta = predict_with_tta(pred, mag, phs, TtaConfig())
    for a, b in zip(plain.channels(), tta.channels()):
        assert np.array_equal(a, b)


def test_tta_identity_only_equals_plain():
    pred = PatternPredictor()
    mag = np.zeros((6, 8), np.float32)
    plain = pred.predict(mag)
    tta = predict_with_tta(pred, mag, None, TtaConfig(transforms=("identity",)))
    for a, b in zip(plain.channels(), tta.channels()):
        assert np.array_equal(a, b)


def test_tta_two_term_mean():
    pred = PatternPredictor()
    mag = np.zeros((6, 8), np.float32)
    cfg = TtaConfig(transforms=("identity", "flip-y"))
    got = predict_with_tta(pred, mag, None, cfg)
    p = pred.predict(mag)
    q = pred.predict(_flip(mag, "flip-y"))
    for ch_got, ch_p, ch_q in zip(got.channels(), p.channels(), q.channels()):
        want = (ch_p.astype(np.float64) + _flip(ch_q, "flip-y")) / 2
        assert np.allclose(ch_got, want, atol=0)


def test_tta_config_requires_identity():
    with pytest.raises(ValidationError):
        TtaConfig(transforms=("flip-x",))
    with pytest.raises(ValidationError):
        TtaConfig(transforms=("identity", "spin"))
    with pytest.raises(ValidationError):
        TtaConfig(transforms=("identity", "identity"))


def test_tta_rejects_wrong_predictor_shape():
    with pytest.raises(DimensionError):
        predict_with_tta(WrongShapePredictor(), np.zeros((6, 6), np.float32))


# ---------------------------------------------------------------------------
# ensemble


def _random_stack(rng, shape=(6, 6)):
    return RegionStack(rng.random(shape), rng.random(shape), rng.random(shape))


def test_ensemble_identical_stacks():
    rng = np.random.default_rng(71)
    s = _random_stack(rng)
    out = ensemble([s, s, s, s])
    for a, b in zip(out.channels(), s.channels()):
        assert np.allclose(a, b, atol=1e-15)


def test_ensemble_two_values():
    a = RegionStack(np.zeros((2, 2)), np.zeros((2, 2)), np.full((2, 2), 0.2))
    b = RegionStack(np.zeros((2, 2)), np.zeros((2, 2)), np.full((2, 2), 0.6))
    out = ensemble([a, b])
    assert np.allclose(out.lesion, 0.4, atol=1e-15)


def test_ensemble_permutation_invariant():
    rng = np.random.default_rng(72)
    stacks = [_random_stack(rng) for _ in range(4)]
    base = ensemble(stacks)
    order = [2, 0, 3, 1]
    shuffled = ensemble([stacks[i] for i in order])
    for a, b in zip(base.channels(), shuffled.channels()):
        assert np.abs(a - b).max() <= 1e-12


def test_ensemble_validation():
    with pytest.raises(ValidationError):
        ensemble([])
    rng = np.random.default_rng(73)
    with pytest.raises(DimensionError):
        ensemble([_random_stack(rng, (4, 4)), _random_stack(rng, (5, 5))])


# ---------------------------------------------------------------------------
# stacking


def test_stack_single_slice():
    rng = np.random.default_rng(74)
    plane = _random_stack(rng, (5, 4))
    vol = stack_slices({0: plane}, 1)
    assert vol.shape == (5, 4, 1)
    assert np.array_equal(vol.wm[:, :, 0], plane.wm)


def test_stack_roundtrips_every_plane():
    rng = np.random.default_rng(75)
    planes = {z: _random_stack(rng, (4, 4)) for z in range(6)}
    vol = stack_slices(planes, 6)
    for z in range(6):
        assert np.array_equal(vol.gm[:, :, z], planes[z].gm)
        assert np.array_equal(vol.lesion[:, :, z], planes[z].lesion)


def test_stack_missing_slice():
    rng = np.random.default_rng(76)
    planes = {z: _random_stack(rng, (4, 4)) for z in (0, 2)}
    with pytest.raises(ValidationError):
        stack_slices(planes, 3)


def test_stack_duplicate_slice():
    rng = np.random.default_rng(77)
    s = _random_stack(rng, (4, 4))
    with pytest.raises(ValidationError):
        stack_slices([(0, s), (0, s)], 1)


def test_stack_shape_mismatch():
    rng = np.random.default_rng(78)
    planes = {0: _random_stack(rng, (4, 4)), 1: _random_stack(rng, (5, 5))}
    with pytest.raises(DimensionError):
        stack_slices(planes, 2)


# ---------------------------------------------------------------------------
# volume prediction and jitter


def test_predict_volume_threaded_matches_serial(monkeypatch):
    mag, phs, labels = generate(PhantomConfig.fitted((32, 32, 8), seed=5))
    pred = MockPredictor.fit(mag, phs, labels)
    serial = predict_volume(pred, mag, phs, threads=1)
    threaded = predict_volume(pred, mag, phs, threads=4)
    for a, b in zip(serial.channels(), threaded.channels()):
        assert np.array_equal(a, b)
    monkeypatch.setenv("CORDPIPE_THREADS", "2")
    capped = predict_volume(pred, mag, phs, threads=8)
    for a, b in zip(serial.channels(), capped.channels()):
        assert np.array_equal(a, b)


def test_jitter_direction_on_phantom():
    # smooth phantom scores near 1; per-slice jitter strictly lowers every
    # class, the same ordering as stacked-2D vs native-3D predictions
    _, _, labels = generate(PhantomConfig(seed=2))
    base = jitter_score(labels)
    shaken = jitter_score(perturb_slices(labels, 1, seed=3))
    for cid in (1, 2, 3, 4):
        assert base[cid] >= 0.95
        assert shaken[cid] < base[cid]


def test_mock_predictor_fit_recovers_phantom():
    mag, phs, labels = generate(PhantomConfig.fitted((32, 32, 4), seed=6))
    pred = MockPredictor.fit(mag, phs, labels)
    plane = pred.predict(mag.data[:, :, 0], phs.data[:, :, 0])
    want_wm = np.isin(labels.data[:, :, 0], (1, 3))
    agree = (plane.wm.astype(bool) == want_wm).mean()
    assert agree > 0.98


def test_mock_predictor_missing_class_center():
    with pytest.raises(ValidationError):
        MockPredictor({0: (0, 0), 1: (1, 1)})


# ---------------------------------------------------------------------------
# subprocess seam

PREDICTOR_SCRIPT = """
import sys
import numpy as np
from cordpipe import read_nifti, write_nifti, ScalarVolume

mag_path, phase_path, out_path = sys.argv[1:4]
mag = read_nifti(open(mag_path, 'rb').read())
phs = read_nifti(open(phase_path, 'rb').read())
m = mag.data[:, :, 0]
p = phs.data[:, :, 0]
wm = (m > 0.5).astype(np.float32)
gm = (p > 0.5).astype(np.float32)
lesion = ((m > 0.5) & (p > 0.5)).astype(np.float32)
out = np.stack([wm, gm, lesion], axis=2)
open(out_path, 'wb').write(write_nifti(ScalarVolume(out, mag.spacing)))
"""


def test_subprocess_predictor_roundtrip(tmp_path):
    script = tmp_path / "predictor.py"
    script.write_text(PREDICTOR_SCRIPT)
    pred = SubprocessPredictor([sys.executable, str(script)])
    rng = np.random.default_rng(79)
    mag = rng.random((6, 7)).astype(np.float32)
    phs = rng.random((6, 7)).astype(np.float32)
    stack = pred.predict(mag, phs)
    assert np.array_equal(stack.wm, (mag > 0.5).astype(np.float32))
    assert np.array_equal(stack.gm, (phs > 0.5).astype(np.float32))
    assert np.array_equal(stack.lesion, ((mag > 0.5) & (phs > 0.5)).astype(np.float32))


def test_subprocess_predictor_failure_reported(tmp_path):
    script = tmp_path / "broken.py"
    script.write_text("import sys; sys.exit(3)")
    pred = SubprocessPredictor([sys.executable, str(script)])
    with pytest.raises(ValidationError):
        pred.predict(np.zeros((4, 4), np.float32))
