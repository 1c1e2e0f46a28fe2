import numpy as np
import pytest

from mcse.array import (
    ArrayGeometry,
    SourceLocation,
    align,
    detect_failures,
    load_geometry,
    save_geometry,
    steering_delays,
    tablet_geometry,
)
from mcse.audio_io import MultichannelWave
from mcse.errors import EnhancementError, NoUsableChannelsError
from mcse.filterbank import stft_analyze
from mcse.simulate import SceneSpec, burst_noise_source, simulate_scene


def test_tablet_geometry_defaults(geometry):
    assert geometry.channel_count == 6
    assert geometry.pdm_excluded == frozenset({2})
    assert geometry.speed_of_sound == 343.0


def test_geometry_file_roundtrip(tmp_path, geometry):
    p = tmp_path / "geom.toml"
    save_geometry(geometry, p)
    back = load_geometry(p)
    np.testing.assert_allclose(back.mic_positions, geometry.mic_positions)
    assert back.pdm_excluded == geometry.pdm_excluded


def test_geometry_needs_two_mics():
    with pytest.raises(EnhancementError):
        ArrayGeometry(np.zeros((1, 3)))


def test_equidistant_source_zero_delays(pair_geometry):
    # point on the perpendicular bisector plane of the pair
    loc = steering_delays(pair_geometry, [0.025, 1.0, 0.0])
    np.testing.assert_allclose(loc.delays, 0.0, atol=1e-15)


def test_endfire_delay_approaches_spacing():
    d = 0.343
    geom = ArrayGeometry(np.array([[0.0, 0, 0], [d, 0, 0]]), pdm_excluded=frozenset())
    loc = steering_delays(geom, [1000.0, 0.0, 0.0])  # far beyond mic 1
    assert loc.delays[0] == 0.0
    assert loc.delays[1] == pytest.approx(-1e-3, rel=1e-3)  # mic 1 leads by ~1 ms


def test_speed_of_sound_scaling(geometry):
    pos = [0.3, 0.5, 0.1]
    fast = ArrayGeometry(
        geometry.mic_positions, speed_of_sound=686.0, pdm_excluded=geometry.pdm_excluded
    )
    np.testing.assert_allclose(
        steering_delays(fast, pos).delays, steering_delays(geometry, pos).delays / 2
    )


def test_delays_translation_invariant(geometry, rng):
    shift = rng.uniform(-1, 1, 3)
    moved = ArrayGeometry(
        geometry.mic_positions + shift, pdm_excluded=geometry.pdm_excluded
    )
    pos = np.array([0.2, 0.3, 0.05])
    np.testing.assert_allclose(
        steering_delays(moved, pos + shift).delays,
        steering_delays(geometry, pos).delays,
        atol=1e-15,
    )


def test_source_on_mic_rejected(geometry):
    with pytest.raises(EnhancementError, match="coincides"):
        steering_delays(geometry, geometry.mic_positions[3])


def test_align_zero_delays_identity(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((2, 4000)), 16000))
    loc = SourceLocation(position=np.zeros(3), delays=np.zeros(2))
    np.testing.assert_array_equal(align(spec, loc).coeffs, spec.coeffs)


def test_align_preserves_magnitude(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((2, 4000)), 16000))
    loc = SourceLocation(position=np.zeros(3), delays=np.array([0.0, 3.7e-4]))
    np.testing.assert_allclose(
        np.abs(align(spec, loc).coeffs), np.abs(spec.coeffs), rtol=1e-12
    )


def test_align_inverse(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((2, 4000)), 16000))
    loc_f = SourceLocation(position=np.zeros(3), delays=np.array([1e-4, -2e-4]))
    loc_b = SourceLocation(position=np.zeros(3), delays=-loc_f.delays)
    back = align(align(spec, loc_f), loc_b)
    np.testing.assert_allclose(back.coeffs, spec.coeffs, atol=1e-12)


def test_align_flattens_plane_wave_phase(geometry):
    rate = 16000
    pos = np.array([0.0, 3.0, 0.0])
    src = burst_noise_source(2 * rate, rate, seed=5)
    scene = simulate_scene(SceneSpec(geometry, src, pos, rate, diffuse_snr_db=None))
    spec = stft_analyze(scene.mixture)
    aligned = align(spec, steering_delays(geometry, pos))
    # high-energy interior bins: inter-channel phase close to zero
    mag = np.abs(aligned.coeffs[0])
    strong = mag > np.percentile(mag, 95)
    for ch in range(1, 6):
        dphi = np.angle(aligned.coeffs[ch] * np.conj(aligned.coeffs[0]))
        assert np.median(np.abs(dphi[strong])) < 0.05


def test_no_failures_on_identical_channels(geometry, rng):
    x = rng.standard_normal(16000)
    wave = MultichannelWave(np.tile(x, (6, 1)), 16000)
    status = detect_failures(wave, geometry)
    assert not status.failed.any()


def test_silent_channel_failed(geometry, rng):
    x = rng.standard_normal((6, 16000))
    base = rng.standard_normal(16000)
    x = base + 0.05 * x
    x[4] = 0.0
    status = detect_failures(MultichannelWave(x, 16000), geometry)
    assert status.failed[4]
    assert not status.failed[[0, 1, 2, 3, 5]].any()


def test_uncorrelated_channel_failed(geometry, rng):
    base = rng.standard_normal(16000)
    x = np.tile(base, (6, 1)) + 0.01 * rng.standard_normal((6, 16000))
    x[3] = rng.standard_normal(16000) * base.std()  # independent, level-matched
    status = detect_failures(MultichannelWave(x, 16000), geometry)
    assert status.failed[3]
    assert not status.failed[[0, 1, 2, 4, 5]].any()


def test_all_failed_raises(geometry, rng):
    # independent noise on every channel: no channel correlates with any other
    x = rng.standard_normal((6, 16000))
    with pytest.raises(NoUsableChannelsError):
        detect_failures(MultichannelWave(x, 16000), geometry)


def test_failure_detection_permutation_equivariant(rng):
    geom = ArrayGeometry(tablet_geometry().mic_positions, pdm_excluded=frozenset())
    base = rng.standard_normal(16000)
    x = np.tile(base, (6, 1)) + 0.01 * rng.standard_normal((6, 16000))
    x[2] = 0.0
    perm = rng.permutation(6)
    status = detect_failures(MultichannelWave(x, 16000), geom)
    status_p = detect_failures(MultichannelWave(x[perm], 16000), geom)
    np.testing.assert_array_equal(status_p.failed, status.failed[perm])
