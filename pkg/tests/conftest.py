import numpy as np
import pytest

from chanorm import AudioBuffer, FramingConfig, save_wav


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def one_second_audio(rng):
    samples = np.clip(0.1 * rng.standard_normal(16000), -1.0, 1.0)
    return AudioBuffer(samples, 16000)


@pytest.fixture
def wav_path(tmp_path, one_second_audio):
    path = tmp_path / "utt.wav"
    save_wav(path, one_second_audio)
    return path


@pytest.fixture
def small_cfg():
    # Tiny config for fast pipeline tests: 8 mel channels, default framing.
    return FramingConfig(n_mels=8)
