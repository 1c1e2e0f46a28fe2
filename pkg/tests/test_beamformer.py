import numpy as np
import pytest

from mcse.array import SourceLocation, align, steering_delays
from mcse.audio_io import MultichannelWave
from mcse.beamformer import (
    apply_beamformer,
    das_weights,
    estimate_noise_covariance,
    mvdr_weights,
    noise_frame_mask,
    steering_vector,
)
from mcse.errors import EnhancementError, ShapeMismatchError
from mcse.filterbank import stft_analyze, stft_synthesize
from mcse.localizer import GridSpec, build_grid
from mcse.metrics import si_sdr
from mcse.simulate import Interferer, SceneSpec, burst_noise_source, simulate_scene

RATE = 16000


def zero_steering(bins, channels):
    return np.ones((bins, channels), dtype=np.complex128)


def test_noise_frame_mask_picks_quiet_frames(rng):
    x = rng.standard_normal((2, 4 * RATE)) * 0.01
    x[:, : RATE] *= 100  # loud first second
    spec = stft_analyze(MultichannelWave(x, RATE))
    mask = noise_frame_mask(spec)
    assert np.count_nonzero(mask) == int(np.ceil(0.2 * spec.n_frames))
    energy = np.sum(np.abs(spec.coeffs) ** 2, axis=(0, 2))
    assert energy[mask].max() <= energy[~mask].min() + 1e-12


def test_covariance_hermitian_and_loaded(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((3, RATE)), RATE))
    cov = estimate_noise_covariance(spec)
    R = cov.matrices
    np.testing.assert_allclose(R, np.conj(np.swapaxes(R, 1, 2)), atol=1e-12)
    # positive definite thanks to the loading term
    eig = np.linalg.eigvalsh(R)
    assert np.all(eig > 0)


def test_covariance_identity_for_white_noise(rng):
    # long white noise: off-diagonals vanish relative to the diagonal
    spec = stft_analyze(MultichannelWave(rng.standard_normal((3, 30 * RATE)), RATE))
    mask = np.ones(spec.n_frames, dtype=bool)
    cov = estimate_noise_covariance(spec, mask)
    R = cov.matrices[10:-10]  # skip DC/Nyquist-adjacent bins
    diag = np.einsum("fmm->fm", R).real
    norms = np.sqrt(diag[:, :, None] * diag[:, None, :])
    ratio = np.abs(R) / norms
    np.testing.assert_allclose(np.einsum("fmm->fm", ratio), 1.0, rtol=1e-12)
    off = ratio - np.eye(3)
    # per-bin estimates fluctuate; the bin-averaged coupling must be small
    assert np.abs(off).mean(axis=0).max() < 0.05
    assert np.abs(off).max() < 0.3


def test_empty_frame_mask_rejected(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((2, RATE)), RATE))
    with pytest.raises(EnhancementError, match="no noise frames"):
        estimate_noise_covariance(spec, np.zeros(spec.n_frames, dtype=bool))


def test_distortionless_constraint(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((4, 2 * RATE)), RATE))
    cov = estimate_noise_covariance(spec)
    d = np.exp(1j * rng.uniform(-np.pi, np.pi, (spec.bins, 4)))
    bf = mvdr_weights(cov, d)
    gain = np.einsum("fm,fm->f", np.conj(bf.weights), d)
    np.testing.assert_allclose(gain, 1.0, atol=1e-8)


def test_das_is_distortionless_and_uniform():
    d = zero_steering(513, 6)
    bf = das_weights(d)
    np.testing.assert_allclose(bf.weights, 1.0 / 6.0)
    np.testing.assert_allclose(
        np.einsum("fm,fm->f", np.conj(bf.weights), d), 1.0, atol=1e-15
    )


def test_steering_vector_unit_modulus(geometry):
    loc = steering_delays(geometry, [1.0, 2.0, 0.3])
    freqs = np.linspace(0, 8000, 513)
    d = steering_vector(loc, freqs)
    assert d.shape == (513, 6)
    np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-14)
    np.testing.assert_allclose(d[:, 0], 1.0, atol=1e-14)  # reference mic


def test_identity_covariance_reduces_to_das(rng):
    # R = I: MVDR collapses to delay-and-sum
    from mcse.beamformer import NoiseCovariance

    bins, M = 65, 4
    cov = NoiseCovariance(
        matrices=np.tile(np.eye(M, dtype=np.complex128), (bins, 1, 1)),
        frame_mask=np.ones(3, dtype=bool),
    )
    d = np.exp(1j * rng.uniform(-np.pi, np.pi, (bins, M)))
    np.testing.assert_allclose(mvdr_weights(cov, d).weights, das_weights(d).weights, atol=1e-12)


def test_shape_mismatch_rejected(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((3, RATE)), RATE))
    cov = estimate_noise_covariance(spec)
    with pytest.raises(ShapeMismatchError):
        mvdr_weights(cov, np.ones((spec.bins, 5), dtype=np.complex128))
    bf = mvdr_weights(cov, np.ones((spec.bins, 3), dtype=np.complex128))
    wrong = stft_analyze(MultichannelWave(rng.standard_normal((2, RATE)), RATE))
    with pytest.raises(ShapeMismatchError):
        apply_beamformer(wrong, bf)


def test_beamformer_output_single_channel(rng):
    spec = stft_analyze(MultichannelWave(rng.standard_normal((3, RATE)), RATE))
    bf = das_weights(zero_steering(spec.bins, 3))
    out = apply_beamformer(spec, bf)
    assert out.channel_count == 1
    np.testing.assert_allclose(out.coeffs[0], spec.coeffs.mean(axis=0), atol=1e-12)


def interference_scene(geometry, seed=0):
    grid = build_grid(geometry, GridSpec(radius_m=3.0))
    target_pos = grid.candidates[100]
    jam_pos = grid.candidates[300]
    n = 3 * RATE
    target = burst_noise_source(n, RATE, seed=seed)
    rng = np.random.default_rng(seed + 1)
    jam = rng.standard_normal(n)
    spec = SceneSpec(
        geometry,
        target,
        target_pos,
        RATE,
        interferer=Interferer(signal=jam, position=jam_pos, snr_db=0.0),
    )
    return simulate_scene(spec), target_pos


def test_mvdr_suppresses_directional_interferer(geometry):
    """MVDR beats delay-and-sum by >= 10 dB SI-SDR on a point interferer."""
    scene, pos = interference_scene(geometry)
    ref = scene.target_images.samples[0]
    spec = stft_analyze(scene.mixture)
    aligned = align(spec, steering_delays(geometry, pos))
    cov = estimate_noise_covariance(aligned)
    d = zero_steering(spec.bins, 6)
    mvdr_out = stft_synthesize(apply_beamformer(aligned, mvdr_weights(cov, d)))
    das_out = stft_synthesize(apply_beamformer(aligned, das_weights(d)))
    gain = si_sdr(mvdr_out.samples[0], ref) - si_sdr(das_out.samples[0], ref)
    assert gain >= 10.0
