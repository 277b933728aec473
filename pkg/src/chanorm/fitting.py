"""Desk-scale fitting of the trainable front-end blocks on a clean/degraded
proxy objective, plus the finite-difference gradient-check driver.

The proxy loss is the mean squared difference between the features of a
clean utterance and a degraded copy, with the clean path treated as a
constant. It exercises the differentiation machinery and the normalization
behavior; it is not a stand-in for recognizer accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, lfilter

from . import pcen as _pcen
from . import pcmn as _pcmn
from .dsp import AudioBuffer, FramingConfig, waveform_to_mel
from .errors import InvalidParameterError, ShapeMismatchError
from .pcen import PcenGradients, PcenParams
from .pcmn import CmnConfig, PcmnGradients, PcmnSpliceParams, SPLICE_CONTEXT
from .pipeline import FrontendParams, FrontendVariant, extract_features, log_compress

FD_STEP = 1e-5
# The splice projection is linear, so central differences carry no truncation
# error at any step; a larger step keeps rounding noise under the 1e-6 check.
FD_STEP_LINEAR = 1e-2
FD_FLOOR = 1e-8


@dataclass(frozen=True)
class ProxyPair:
    """A clean utterance and a degraded copy of equal length."""

    clean: AudioBuffer
    degraded: AudioBuffer

    def __post_init__(self):
        if self.clean.samples.shape != self.degraded.samples.shape:
            raise ShapeMismatchError(
                f"clean/degraded sample counts differ: "
                f"{self.clean.samples.size} vs {self.degraded.samples.size}"
            )
        if self.clean.sample_rate != self.degraded.sample_rate:
            raise ShapeMismatchError("clean/degraded sample rates differ")


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.05
    steps: int = 500
    seed: int = 0
    objective: str = "mse"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            raise InvalidParameterError(f"steps must be >= 1, got {self.steps}")
        if self.objective != "mse":
            raise InvalidParameterError(f"unknown objective {self.objective!r}")


@dataclass
class FrontendGradients:
    pcen: PcenGradients | None = None
    pcmn: PcmnGradients | None = None


# --- parametric chain on precomputed mel energies ---


def chain_forward(
    energies: np.ndarray,
    variant: FrontendVariant,
    params: FrontendParams,
    cmn: CmnConfig | None = None,
):
    """Nonlinearity + post-normalizer on a mel-energy matrix; returns (out, cache)."""
    cache: dict = {"energies": energies}
    if variant.uses_pcen:
        features, smoothed = _pcen.pcen_forward(energies, params.pcen)
        cache["smoothed"] = smoothed
    else:
        features = log_compress(energies)
    cache["pre_post"] = features
    if variant.post_norm == "cmn":
        features = _pcmn.cmn_apply(features, cmn or CmnConfig())
    elif variant.post_norm == "pcmn_direct":
        features = _pcmn.pcmn_direct(features, params.pcmn_direct, cmn or CmnConfig())
    elif variant.post_norm == "pcmn_splice":
        features = _pcmn.pcmn_splice_forward(features, params.pcmn_splice)
    return features, cache


def chain_backward(
    cache: dict,
    variant: FrontendVariant,
    params: FrontendParams,
    upstream: np.ndarray,
) -> FrontendGradients:
    """Backpropagate through the trainable blocks of the chain."""
    grads = FrontendGradients()
    if variant.post_norm == "pcmn_splice":
        grads.pcmn = _pcmn.pcmn_backward(cache["pre_post"], params.pcmn_splice, upstream)
        upstream = grads.pcmn.d_input
    elif variant.post_norm != "none":
        raise InvalidParameterError(
            f"backward pass supports post-normalizer 'none' or 'pcmn_splice', "
            f"got {variant.post_norm!r}"
        )
    if variant.uses_pcen:
        grads.pcen = _pcen.pcen_backward(cache["energies"], cache["smoothed"], params.pcen, upstream)
    return grads


def proxy_loss(
    pair: ProxyPair,
    variant: FrontendVariant,
    params: FrontendParams,
    cfg: FramingConfig | None = None,
    cmn: CmnConfig | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared feature mismatch and its gradient w.r.t. the degraded features."""
    cfg = cfg or FramingConfig()
    clean = extract_features(pair.clean, variant, params, cfg, cmn).values
    degraded = extract_features(pair.degraded, variant, params, cfg, cmn).values
    if clean.shape != degraded.shape:
        raise ShapeMismatchError(
            f"feature shapes differ: clean {clean.shape} vs degraded {degraded.shape}"
        )
    diff = degraded - clean
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


def grad_step(params: FrontendParams, grads: FrontendGradients, cfg: FitConfig) -> FrontendParams:
    """One projected gradient-descent update; splice parameters are unconstrained."""
    lr = cfg.learning_rate
    pcen_block = params.pcen
    splice_block = params.pcmn_splice
    if grads.pcen is not None and pcen_block is not None:
        pcen_block = replace(
            pcen_block,
            alpha=np.clip(pcen_block.alpha - lr * grads.pcen.d_alpha, _pcen.ALPHA_MIN, _pcen.ALPHA_MAX),
            delta=np.maximum(pcen_block.delta - lr * grads.pcen.d_delta, _pcen.DELTA_MIN),
            r=np.clip(pcen_block.r - lr * grads.pcen.d_r, _pcen.R_MIN, _pcen.R_MAX),
        )
    if grads.pcmn is not None and splice_block is not None:
        splice_block = PcmnSpliceParams(
            weights=splice_block.weights - lr * grads.pcmn.d_weights,
            bias=splice_block.bias - lr * grads.pcmn.d_bias,
        )
    return replace(params, pcen=pcen_block, pcmn_splice=splice_block)


@dataclass
class FitResult:
    params: FrontendParams
    steps: list[dict]

    @property
    def initial_loss(self) -> float:
        return self.steps[0]["loss"]

    @property
    def final_loss(self) -> float:
        return self.steps[-1]["loss"]

    def report_lines(self) -> list[str]:
        return [json.dumps(record) for record in self.steps]


def _gradient_norm(grads: FrontendGradients) -> float:
    total = 0.0
    if grads.pcen is not None:
        for g in (grads.pcen.d_alpha, grads.pcen.d_delta, grads.pcen.d_r):
            total += float(np.sum(g**2))
    if grads.pcmn is not None:
        for g in (grads.pcmn.d_weights, grads.pcmn.d_bias):
            total += float(np.sum(g**2))
    return float(np.sqrt(total))


def _accumulate(total: FrontendGradients, part: FrontendGradients, scale: float) -> None:
    if part.pcen is not None:
        if total.pcen is None:
            total.pcen = PcenGradients(
                d_alpha=scale * part.pcen.d_alpha,
                d_delta=scale * part.pcen.d_delta,
                d_r=scale * part.pcen.d_r,
                d_input=np.zeros((0, 0)),
            )
        else:
            total.pcen.d_alpha += scale * part.pcen.d_alpha
            total.pcen.d_delta += scale * part.pcen.d_delta
            total.pcen.d_r += scale * part.pcen.d_r
    if part.pcmn is not None:
        if total.pcmn is None:
            total.pcmn = PcmnGradients(
                d_weights=scale * part.pcmn.d_weights,
                d_bias=scale * part.pcmn.d_bias,
                d_input=np.zeros((0, 0)),
            )
        else:
            total.pcmn.d_weights += scale * part.pcmn.d_weights
            total.pcmn.d_bias += scale * part.pcmn.d_bias


def fit(
    pairs: list[ProxyPair],
    variant: FrontendVariant,
    params: FrontendParams,
    fit_cfg: FitConfig,
    framing: FramingConfig | None = None,
) -> FitResult:
    """Projected gradient descent on the proxy objective over all pairs.

    Mel energies are parameter-free, so they are computed once per pair and
    the parametric chain is re-run from them at every step; the trajectory
    is identical to re-extracting from audio.
    """
    if not variant.trainable:
        raise InvalidParameterError(f"variant {variant.tag!r} has no trainable blocks")
    params.require(variant)
    framing = framing or FramingConfig()
    cached = [
        (waveform_to_mel(p.clean, framing).values, waveform_to_mel(p.degraded, framing).values)
        for p in pairs
    ]
    records = []
    for step in range(fit_cfg.steps):
        total = FrontendGradients()
        loss_sum = 0.0
        for clean_e, degraded_e in cached:
            clean_f, _ = chain_forward(clean_e, variant, params)
            degraded_f, cache = chain_forward(degraded_e, variant, params)
            diff = degraded_f - clean_f
            loss_sum += float(np.mean(diff**2))
            upstream = 2.0 * diff / diff.size
            _accumulate(total, chain_backward(cache, variant, params, upstream), 1.0 / len(pairs))
        records.append(
            {"step": step, "loss": loss_sum / len(pairs), "grad_norm": _gradient_norm(total)}
        )
        params = grad_step(params, total, fit_cfg)
    return FitResult(params=params, steps=records)


def make_gain_mismatch_task(
    seed: int,
    n_pairs: int = 20,
    duration_s: float = 1.0,
    sample_rate: int = 16000,
    gain_range: tuple[float, float] = (0.25, 0.8),
    amplitude: float = 0.06,
) -> list[ProxyPair]:
    """Seeded synthetic utterances with per-utterance waveform gain mismatch.

    Each clean utterance is speech-band noise with a slow syllable-rate
    amplitude envelope over a broadband floor, scaled so the mel energies
    sit well above the gain-control eps yet below unit energy; the degraded
    copy is the same waveform times a log-uniform random gain.
    """
    rng = np.random.default_rng(seed)
    n = int(duration_s * sample_rate)
    nyquist = sample_rate / 2
    band_b, band_a = butter(2, [300 / nyquist, 3400 / nyquist], btype="bandpass")
    env_b, env_a = butter(2, 4 / nyquist, btype="low")
    pairs = []
    for _ in range(n_pairs):
        voiced = lfilter(band_b, band_a, rng.standard_normal(n))
        envelope = lfilter(env_b, env_a, rng.standard_normal(n)) ** 2
        envelope = 0.2 + envelope / (np.max(envelope) + 1e-12)
        clean = voiced * envelope + 0.15 * rng.standard_normal(n)
        clean = clean * (amplitude / np.max(np.abs(clean)))
        gain = float(np.exp(rng.uniform(np.log(gain_range[0]), np.log(gain_range[1]))))
        pairs.append(
            ProxyPair(
                clean=AudioBuffer(clean, sample_rate),
                degraded=AudioBuffer(gain * clean, sample_rate),
            )
        )
    return pairs


# --- finite-difference gradient check ---


@dataclass
class GradcheckEntry:
    max_rel_err: float
    max_abs_analytic: float


def _rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FD_FLOOR)
    return np.abs(analytic - numeric) / denom


def _central_diff(forward, upstream: np.ndarray, array: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """d/d(array) of sum(upstream * forward()), by central differences.

    The output matrices are differenced before the contraction with
    upstream, which keeps the quotient well conditioned even when the
    contracted objective is large.
    """
    grad = np.zeros_like(array)
    flat = grad.reshape(-1)
    base = array.reshape(-1)
    for idx in range(base.size):
        saved = base[idx]
        base[idx] = saved + h
        hi = forward()
        base[idx] = saved - h
        lo = forward()
        base[idx] = saved
        flat[idx] = float(np.sum(upstream * (hi - lo))) / (2.0 * h)
    return grad


def check_pcen_gradients(
    energies: np.ndarray, params: PcenParams, upstream: np.ndarray
) -> dict[str, GradcheckEntry]:
    """Compare analytic pcen gradients against central finite differences."""
    out, smoothed = _pcen.pcen_forward(energies, params)
    grads = _pcen.pcen_backward(energies, smoothed, params, upstream)

    alpha = params.alpha.copy()
    delta = params.delta.copy()
    r = params.r.copy()
    work_e = np.array(energies, dtype=np.float64)

    def forward():
        probe = PcenParams(
            alpha=alpha, delta=delta, r=r, s=params.s, eps=params.eps,
            agc_enabled=params.agc_enabled, drc_enabled=params.drc_enabled,
        )
        return _pcen.pcen_forward(work_e, probe)[0]

    report = {
        "pcen.alpha": (grads.d_alpha, _central_diff(forward, upstream, alpha)),
        "pcen.delta": (grads.d_delta, _central_diff(forward, upstream, delta)),
        "pcen.r": (grads.d_r, _central_diff(forward, upstream, r)),
        "pcen.input": (grads.d_input, _central_diff(forward, upstream, work_e)),
    }
    return {
        key: GradcheckEntry(
            max_rel_err=float(np.max(_rel_errors(analytic, numeric))),
            max_abs_analytic=float(np.max(np.abs(analytic))),
        )
        for key, (analytic, numeric) in report.items()
    }


def check_pcmn_gradients(
    features: np.ndarray, params: PcmnSpliceParams, upstream: np.ndarray
) -> dict[str, GradcheckEntry]:
    """Compare analytic splice-projection gradients against central differences."""
    grads = _pcmn.pcmn_backward(features, params, upstream)
    weights = params.weights.copy()
    bias = params.bias.copy()
    work_x = np.array(features, dtype=np.float64)

    def forward():
        return _pcmn.pcmn_splice_forward(work_x, PcmnSpliceParams(weights=weights, bias=bias))

    report = {
        "pcmn.weights": (grads.d_weights, _central_diff(forward, upstream, weights, FD_STEP_LINEAR)),
        "pcmn.bias": (grads.d_bias, _central_diff(forward, upstream, bias, FD_STEP_LINEAR)),
        "pcmn.input": (grads.d_input, _central_diff(forward, upstream, work_x, FD_STEP_LINEAR)),
    }
    return {
        key: GradcheckEntry(
            max_rel_err=float(np.max(_rel_errors(analytic, numeric))),
            max_abs_analytic=float(np.max(np.abs(analytic))),
        )
        for key, (analytic, numeric) in report.items()
    }


def draw_pcen_params(rng: np.random.Generator, n_channels: int, **flags) -> PcenParams:
    """Random valid pcen parameters, kept away from the box edges."""
    return PcenParams(
        alpha=rng.uniform(0.05, 0.95, n_channels),
        delta=rng.uniform(0.5, 3.0, n_channels),
        r=rng.uniform(0.3, 0.95, n_channels),
        s=float(rng.uniform(0.1, 0.9)),
        eps=1e-6,
        **flags,
    )


def gradcheck(
    variant: FrontendVariant,
    seed: int = 0,
    n_frames: int | None = None,
    n_channels: int | None = None,
) -> dict[str, GradcheckEntry]:
    """Random-draw gradient check for the trainable blocks of a variant.

    Draws energies in [0.1, 10], valid parameters, and a random upstream
    matrix, then reports the max relative error per parameter group
    (denominators floored at 1e-8).
    """
    if not variant.trainable:
        raise InvalidParameterError(f"variant {variant.tag!r} has no trainable blocks")
    rng = np.random.default_rng(seed)
    report: dict[str, GradcheckEntry] = {}
    if variant.trainable_pcen:
        t, f = n_frames or 8, n_channels or 3
        params = draw_pcen_params(
            rng, f, agc_enabled=not variant.no_agc, drc_enabled=not variant.no_drc
        )
        energies = rng.uniform(0.1, 10.0, (t, f))
        upstream = rng.standard_normal((t, f))
        report.update(check_pcen_gradients(energies, params, upstream))
    if variant.trainable_pcmn:
        t, f = n_frames or 30, n_channels or 5
        params = PcmnSpliceParams(
            weights=0.3 * rng.standard_normal((f, f * SPLICE_CONTEXT)),
            bias=0.3 * rng.standard_normal(f),
        )
        features = rng.uniform(-5.0, 5.0, (t, f))
        upstream = rng.standard_normal((t, f))
        report.update(check_pcmn_gradients(features, params, upstream))
    return report
