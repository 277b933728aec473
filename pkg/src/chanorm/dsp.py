"""Waveform-to-mel-energy conversion: WAV ingestion, framing, power spectrum, mel filterbank."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .errors import ConfigError, SignalTooShortError, UnsupportedFormatError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_FRAME_MS = 25.0
DEFAULT_HOP_MS = 10.0
DEFAULT_FFT_SIZE = 512
DEFAULT_N_MELS = 40
DEFAULT_FMIN_HZ = 20.0
DEFAULT_FMAX_HZ = 7600.0

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise UnsupportedFormatError(f"expected 1-D sample array, got {samples.ndim}-D")
        if self.sample_rate <= 0:
            raise UnsupportedFormatError(f"sample rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise UnsupportedFormatError("samples contain non-finite values")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise UnsupportedFormatError("samples exceed the [-1, 1] range")


@dataclass(frozen=True)
class FramingConfig:
    """Framing / spectral-analysis settings for the front-end.

    Durations are in milliseconds; frame and hop lengths in samples are
    derived from `sample_rate`. `pre_emphasis` and `dither` default to
    off (0.0) and dither, when enabled, is intentionally non-deterministic.
    """

    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame_len_ms: float = DEFAULT_FRAME_MS
    hop_ms: float = DEFAULT_HOP_MS
    fft_size: int = DEFAULT_FFT_SIZE
    n_mels: int = DEFAULT_N_MELS
    fmin_hz: float = DEFAULT_FMIN_HZ
    fmax_hz: float = DEFAULT_FMAX_HZ
    window: str = "hamming"
    mel_scale: str = "htk"
    pre_emphasis: float = 0.0
    dither: float = 0.0

    def __post_init__(self):
        if self.hop_ms <= 0 or self.frame_len_ms < self.hop_ms:
            raise ConfigError(
                f"need frame_len_ms >= hop_ms > 0, got {self.frame_len_ms}/{self.hop_ms}"
            )
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ConfigError(f"fft_size must be a positive power of two, got {self.fft_size}")
        if self.fft_size < self.frame_samples:
            raise ConfigError(
                f"fft_size {self.fft_size} smaller than frame length {self.frame_samples}"
            )
        if self.n_mels < 1:
            raise ConfigError(f"n_mels must be positive, got {self.n_mels}")
        if not (0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate / 2):
            raise ConfigError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got "
                f"[{self.fmin_hz}, {self.fmax_hz}] at {self.sample_rate} Hz"
            )
        if self.window not in ("hamming", "hann"):
            raise ConfigError(f"unknown window {self.window!r}, expected 'hamming' or 'hann'")
        if self.mel_scale != "htk":
            raise ConfigError(f"unknown mel scale {self.mel_scale!r}, expected 'htk'")

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_len_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))


@dataclass(frozen=True)
class MelEnergies:
    """Non-negative filterbank energies, frames along rows, channels along columns."""

    values: np.ndarray
    config: FramingConfig = field(default_factory=FramingConfig)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def load_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM RIFF/WAVE file, scaling samples by 1/32768."""
    try:
        reader = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: not a readable RIFF/WAVE file ({exc})") from exc
    with reader:
        n_channels = reader.getnchannels()
        if n_channels != 1:
            raise UnsupportedFormatError(f"{path}: expected mono audio, got {n_channels} channels")
        width = reader.getsampwidth()
        if width != 2:
            raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
        if reader.getcomptype() != "NONE":
            raise UnsupportedFormatError(
                f"{path}: expected uncompressed PCM, got {reader.getcomptype()!r}"
            )
        raw = reader.readframes(reader.getnframes())
        rate = reader.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    return AudioBuffer(samples=samples, sample_rate=rate)


def save_wav(path, audio: AudioBuffer) -> None:
    """Write an AudioBuffer as mono 16-bit PCM (rounding samples to the PCM grid)."""
    pcm = np.clip(np.rint(audio.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(audio.sample_rate)
        writer.writeframes(pcm.tobytes())


def frame_signal(audio: AudioBuffer, cfg: FramingConfig) -> np.ndarray:
    """Slice audio into hop-spaced windowed frames (no tail padding).

    Returns a [T x frame_samples] matrix with
    T = floor((n_samples - frame_samples) / hop_samples) + 1.
    """
    if audio.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"audio sample rate {audio.sample_rate} does not match config {cfg.sample_rate}"
        )
    x = audio.samples
    if cfg.dither > 0.0:
        x = x + np.random.default_rng().normal(0.0, cfg.dither, size=x.shape)
    if cfg.pre_emphasis > 0.0:
        x = np.concatenate(([x[0]], x[1:] - cfg.pre_emphasis * x[:-1])) if x.size else x
    frame_len = cfg.frame_samples
    hop = cfg.hop_samples
    if x.size < frame_len:
        raise SignalTooShortError(
            f"signal has {x.size} samples, need at least {frame_len} for one frame"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop].astype(np.float64)
    window = get_window(cfg.window, frame_len, fftbins=True)
    return frames * window


def power_spectrum(frames: np.ndarray, cfg: FramingConfig) -> np.ndarray:
    """Magnitude-squared DFT of each windowed frame, non-negative-frequency bins only.

    No 1/N scaling is applied; row k of the output has fft_size/2 + 1 bins.
    """
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(hz):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    """Inverse of the HTK mel scale."""
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FramingConfig) -> np.ndarray:
    """Unit-peak triangular filters spaced uniformly in mel between fmin and fmax.

    Triangles are evaluated at the exact DFT bin center frequencies; no
    area normalization is applied. Returns an [n_mels x (fft_size/2 + 1)]
    weight matrix.
    """
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * (cfg.sample_rate / cfg.fft_size)
    corners_mel = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    corners_hz = mel_to_hz(corners_mel)
    weights = np.zeros((cfg.n_mels, n_bins))
    for f in range(cfg.n_mels):
        left, center, right = corners_hz[f], corners_hz[f + 1], corners_hz[f + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        weights[f] = np.clip(np.minimum(rising, falling), 0.0, None)
    return weights


def apply_mel(power: np.ndarray, cfg: FramingConfig) -> MelEnergies:
    """Pool a power spectrum into mel channel energies."""
    n_bins = cfg.fft_size // 2 + 1
    if power.ndim != 2 or power.shape[1] != n_bins:
        raise ConfigError(
            f"power spectrum has shape {power.shape}, expected [T x {n_bins}] for this config"
        )
    values = power @ mel_filterbank(cfg).T
    return MelEnergies(values=values, config=cfg)


def waveform_to_mel(audio: AudioBuffer, cfg: FramingConfig) -> MelEnergies:
    """Full deterministic chain: framing, windowing, power spectrum, mel pooling."""
    return apply_mel(power_spectrum(frame_signal(audio, cfg), cfg), cfg)
