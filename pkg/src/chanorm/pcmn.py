"""Mean-subtraction post-normalizers: plain CMN, its per-channel affine
generalization, and the trainable splice-projection form with gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidParameterError, ShapeMismatchError

SPLICE_HALF = 10
SPLICE_CONTEXT = 2 * SPLICE_HALF + 1  # 21 frames, channel-major in the spliced vector

DEFAULT_SLIDING_HALF = 150  # trailing context N = 300 frames (3 s at a 10 ms hop)


@dataclass(frozen=True)
class CmnConfig:
    """Mean-estimator settings: whole utterance, or a trailing sliding window.

    In sliding mode the mean at frame t is taken over frames
    max(0, t - N)..t with N = 2 * window_half, shortened at the start.
    """

    mode: str = "full_utterance"
    window_half: int = DEFAULT_SLIDING_HALF

    def __post_init__(self):
        if self.mode not in ("full_utterance", "sliding"):
            raise InvalidParameterError(
                f"unknown mean mode {self.mode!r}, expected 'full_utterance' or 'sliding'"
            )
        if self.mode == "sliding" and self.window_half < 1:
            raise InvalidParameterError(
                f"window_half must be >= 1 in sliding mode, got {self.window_half}"
            )


@dataclass(frozen=True)
class PcmnDirectParams:
    """Per-channel gains and offset for the affine normalizer
    beta * X - (alpha * mu + mu0)."""

    beta: np.ndarray
    alpha: np.ndarray
    mu0: np.ndarray

    def __post_init__(self):
        for name in ("beta", "alpha", "mu0"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if not (self.beta.shape == self.alpha.shape == self.mu0.shape) or self.beta.ndim != 1:
            raise ShapeMismatchError(
                f"beta/alpha/mu0 must be equal-length vectors, got shapes "
                f"{self.beta.shape}/{self.alpha.shape}/{self.mu0.shape}"
            )
        if np.any(self.alpha < 0.0) or np.any(self.alpha > 1.0):
            raise InvalidParameterError(
                f"alpha must lie in [0, 1], got min={self.alpha.min()} max={self.alpha.max()}"
            )
        for name in ("beta", "mu0"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidParameterError(f"{name} contains non-finite values")

    @property
    def n_channels(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class PcmnSpliceParams:
    """Linear projection over 21 spliced context frames: W . Y_t + b."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "bias", np.atleast_1d(np.asarray(self.bias, dtype=np.float64)))
        n = self.bias.shape[0]
        if self.weights.shape != (n, n * SPLICE_CONTEXT):
            raise ShapeMismatchError(
                f"weights must have shape [{n} x {n * SPLICE_CONTEXT}] for {n} channels, "
                f"got {self.weights.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InvalidParameterError("weights/bias contain non-finite values")

    @property
    def n_channels(self) -> int:
        return self.bias.shape[0]


@dataclass
class PcmnGradients:
    d_weights: np.ndarray
    d_bias: np.ndarray
    d_input: np.ndarray


def running_mean(features: np.ndarray, cfg: CmnConfig) -> np.ndarray:
    """Per-channel mean track used by the subtractive normalizers."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise EmptyInputError(f"expected a non-empty [T x F] matrix, got shape {features.shape}")
    n_frames = features.shape[0]
    if cfg.mode == "full_utterance":
        return np.broadcast_to(features.mean(axis=0), features.shape)
    window = 2 * cfg.window_half  # trailing context N; window covers N + 1 frames
    csum = np.cumsum(features, axis=0)
    totals = csum.copy()
    counts = np.minimum(np.arange(n_frames), window) + 1.0
    if n_frames > window + 1:
        totals[window + 1 :] = csum[window + 1 :] - csum[: n_frames - window - 1]
    return totals / counts[:, np.newaxis]


def cmn_apply(features: np.ndarray, cfg: CmnConfig | None = None) -> np.ndarray:
    """Subtract the per-channel mean track."""
    cfg = cfg or CmnConfig()
    features = np.asarray(features, dtype=np.float64)
    return features - running_mean(features, cfg)


def pcmn_direct(
    features: np.ndarray, params: PcmnDirectParams, cfg: CmnConfig | None = None
) -> np.ndarray:
    """Affine normalizer beta * X - (alpha * mu + mu0) with mu from `running_mean`."""
    cfg = cfg or CmnConfig()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.n_channels:
        raise ShapeMismatchError(
            f"features have shape {features.shape}, params have {params.n_channels} channels"
        )
    mu = running_mean(features, cfg)
    return params.beta * features - (params.alpha * mu + params.mu0)


def splice_frames(features: np.ndarray) -> np.ndarray:
    """Stack +/-10 context frames per channel (channel-major), replicating edges.

    Output row t holds, for each channel i, the 21 context values
    X[t-10..t+10, i] at columns i*21..i*21+20.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise EmptyInputError(f"expected a non-empty [T x F] matrix, got shape {features.shape}")
    n_frames, n_channels = features.shape
    padded = np.concatenate(
        [
            np.repeat(features[:1], SPLICE_HALF, axis=0),
            features,
            np.repeat(features[-1:], SPLICE_HALF, axis=0),
        ]
    )
    spliced = np.empty((n_frames, n_channels, SPLICE_CONTEXT))
    for c in range(SPLICE_CONTEXT):
        spliced[:, :, c] = padded[c : c + n_frames]
    return spliced.reshape(n_frames, n_channels * SPLICE_CONTEXT)


def pcmn_splice_forward(features: np.ndarray, params: PcmnSpliceParams) -> np.ndarray:
    """Project the spliced context of each frame: W . Y_t + b."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != params.n_channels:
        raise ShapeMismatchError(
            f"features have shape {features.shape}, params have {params.n_channels} channels"
        )
    return splice_frames(features) @ params.weights.T + params.bias


def pcmn_backward(
    features: np.ndarray, params: PcmnSpliceParams, upstream: np.ndarray
) -> PcmnGradients:
    """Gradients of the splice projection.

    d_bias sums upstream over frames, d_weights accumulates the outer
    products with the spliced inputs, and d_input scatters the transposed
    weight contributions back through the splice; replicated edge frames
    collect the gradients of all their copies.
    """
    features = np.asarray(features, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (features.shape[0], params.n_channels):
        raise ShapeMismatchError(
            f"upstream has shape {upstream.shape}, expected "
            f"({features.shape[0]}, {params.n_channels})"
        )
    n_frames, n_channels = features.shape
    spliced = splice_frames(features)
    d_bias = upstream.sum(axis=0)
    d_weights = upstream.T @ spliced
    d_spliced = (upstream @ params.weights).reshape(n_frames, n_channels, SPLICE_CONTEXT)
    d_input = np.zeros_like(features)
    frame_idx = np.arange(n_frames)
    for c in range(SPLICE_CONTEXT):
        sources = np.clip(frame_idx + c - SPLICE_HALF, 0, n_frames - 1)
        np.add.at(d_input, sources, d_spliced[:, :, c])
    return PcmnGradients(d_weights=d_weights, d_bias=d_bias, d_input=d_input)
