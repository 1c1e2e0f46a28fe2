import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcse.audio_io import MultichannelWave
from mcse.errors import EnhancementError
from mcse.filterbank import (
    Spectrogram,
    StftConfig,
    cola_deviation,
    dump_spectrogram,
    load_spectrogram,
    stft_analyze,
    stft_synthesize,
)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_default_config_is_cola():
    assert cola_deviation(StftConfig()) < 1e-10


def test_non_cola_rejected():
    with pytest.raises(EnhancementError, match="COLA"):
        StftConfig(window_length=1024, hop=700)


def test_hop_larger_than_window_rejected():
    with pytest.raises(EnhancementError):
        StftConfig(window_length=256, hop=512)


def test_roundtrip_white_noise(rng):
    wave = MultichannelWave(rng.standard_normal((3, 20000)) * 0.2, 16000)
    back = stft_synthesize(stft_analyze(wave))
    assert rel_l2(back.samples, wave.samples) < 1e-6
    assert back.n_samples == wave.n_samples


def test_too_short_wave_rejected():
    with pytest.raises(EnhancementError, match="shorter"):
        stft_analyze(MultichannelWave(np.zeros((1, 512)), 16000))


def test_zero_signal_zero_spectrogram():
    wave = MultichannelWave(np.zeros((2, 4096)), 16000)
    spec = stft_analyze(wave)
    assert np.all(spec.coeffs == 0)
    assert np.all(stft_synthesize(spec).samples == 0)


def test_sinusoid_energy_concentration():
    cfg = StftConfig()
    rate = 16000
    k = 40  # bin-centered frequency
    f = k * rate / cfg.fft_size
    t = np.arange(4 * cfg.fft_size) / rate
    wave = MultichannelWave(0.5 * np.cos(2 * np.pi * f * t)[None, :], rate)
    spec = stft_analyze(wave, cfg)
    # interior frame: energy concentrated in the mainlobe around bin k
    frame = np.abs(spec.coeffs[0, spec.n_frames // 2]) ** 2
    assert frame[k - 1 : k + 2].sum() / frame.sum() > 0.99
    assert np.argmax(frame) == k


def test_impulse_first_frame_flat():
    cfg = StftConfig()
    x = np.zeros((1, 2048))
    x[0, 0] = 1.0
    spec = stft_analyze(MultichannelWave(x, 16000), cfg)
    # frame 0 is centered on sample 0: the impulse sits at the window midpoint
    mag = np.abs(spec.coeffs[0, 0])
    expected = cfg.taper()[cfg.window_length // 2]
    np.testing.assert_allclose(mag, expected, rtol=1e-12)


def test_linearity(rng):
    wave_x = MultichannelWave(rng.standard_normal((2, 5000)), 16000)
    wave_y = MultichannelWave(rng.standard_normal((2, 5000)), 16000)
    a, b = 0.7, -1.3
    combo = MultichannelWave(a * wave_x.samples + b * wave_y.samples, 16000)
    lhs = stft_analyze(combo).coeffs
    rhs = a * stft_analyze(wave_x).coeffs + b * stft_analyze(wave_y).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_synthesis_linearity(rng):
    wave = MultichannelWave(rng.standard_normal((1, 6000)), 16000)
    spec = stft_analyze(wave)
    g = 0.37
    scaled = Spectrogram(g * spec.coeffs, spec.config, spec.sample_rate, spec.n_samples)
    np.testing.assert_allclose(
        stft_synthesize(scaled).samples, g * stft_synthesize(spec).samples, atol=1e-12
    )


def test_parseval_per_frame(rng):
    cfg = StftConfig()
    wave = MultichannelWave(rng.standard_normal((1, 8000)), 16000)
    spec = stft_analyze(wave, cfg)
    # reconstruct the windowed frame energies from the one-sided spectrum
    X = spec.coeffs[0]
    freq_energy = (
        np.abs(X[:, 0]) ** 2
        + 2 * np.sum(np.abs(X[:, 1:-1]) ** 2, axis=1)
        + np.abs(X[:, -1]) ** 2
    ) / cfg.fft_size
    pad = cfg.window_length // 2
    x = np.pad(wave.samples[0], (pad, pad), mode="reflect")
    win = cfg.taper()
    for t in range(spec.n_frames - 1):  # last frame may extend into zero pad
        seg = x[t * cfg.hop : t * cfg.hop + cfg.window_length] * win
        time_energy = np.sum(seg**2)
        assert abs(freq_energy[t] - time_energy) / time_energy < 1e-6


def test_dump_roundtrip(tmp_path, rng):
    wave = MultichannelWave(rng.standard_normal((2, 4000)) * 0.1, 16000)
    spec = stft_analyze(wave)
    path = tmp_path / "spec.bin"
    dump_spectrogram(spec, path)
    back = load_spectrogram(path)
    assert back.coeffs.shape == spec.coeffs.shape
    assert back.sample_rate == spec.sample_rate
    np.testing.assert_allclose(back.coeffs, spec.coeffs, atol=1e-4)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1100, 9000))
def test_roundtrip_property(seed, n):
    rng = np.random.default_rng(seed)
    wave = MultichannelWave(rng.standard_normal((1, n)), 16000)
    back = stft_synthesize(stft_analyze(wave))
    assert back.samples.shape == wave.samples.shape
    assert rel_l2(back.samples, wave.samples) < 1e-6
