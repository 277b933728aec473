"""Per-channel energy normalization: IIR smoothing, gain control, range compression.

The forward map per channel is

    M[0] = E[0],  M[t] = (1 - s) * M[t-1] + s * E[t]
    G[t] = E[t] / (M[t] + eps)^alpha        (gain control; G = E when disabled)
    out  = (G + delta)^r - delta^r          (compression; out = G when disabled)

with per-channel vectors alpha, delta, r and scalars s, eps. The backward
pass is the exact reverse-mode differentiation of this computation,
including the reverse-time recursion through M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import (
    EmptyInputError,
    InvalidParameterError,
    InvalidSmoothingError,
    ShapeMismatchError,
)

DEFAULT_EPS = 1e-6

# Projection box used by training updates; keeps the forward map well-defined.
ALPHA_MIN = 1e-3
ALPHA_MAX = 1.0
R_MIN = 1e-3
R_MAX = 1.0
DELTA_MIN = 1e-3


@dataclass(frozen=True)
class PcenParams:
    """Per-channel normalizer parameters plus the two ablation switches."""

    alpha: np.ndarray
    delta: np.ndarray
    r: np.ndarray
    s: float = 1.0 / 40.0
    eps: float = DEFAULT_EPS
    agc_enabled: bool = True
    drc_enabled: bool = True

    def __post_init__(self):
        for name in ("alpha", "delta", "r"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))
        if not (self.alpha.shape == self.delta.shape == self.r.shape) or self.alpha.ndim != 1:
            raise ShapeMismatchError(
                f"alpha/delta/r must be equal-length vectors, got shapes "
                f"{self.alpha.shape}/{self.delta.shape}/{self.r.shape}"
            )
        if np.any(self.alpha <= 0.0) or np.any(self.alpha > 1.0):
            raise InvalidParameterError(
                f"alpha must lie in (0, 1], got min={self.alpha.min()} max={self.alpha.max()}"
            )
        if np.any(self.r <= 0.0) or np.any(self.r > 1.0):
            raise InvalidParameterError(
                f"r must lie in (0, 1], got min={self.r.min()} max={self.r.max()}"
            )
        if np.any(self.delta <= 0.0):
            raise InvalidParameterError(f"delta must be > 0, got min={self.delta.min()}")
        if not (0.0 < self.s <= 1.0):
            raise InvalidSmoothingError(f"smoothing coefficient must be in (0, 1], got {self.s}")
        if self.eps <= 0.0:
            raise InvalidParameterError(f"eps must be > 0, got {self.eps}")

    @property
    def n_channels(self) -> int:
        return self.alpha.shape[0]


@dataclass
class PcenGradients:
    """Parameter and input gradients accumulated over all frames."""

    d_alpha: np.ndarray
    d_delta: np.ndarray
    d_r: np.ndarray
    d_input: np.ndarray


def smooth_energies(energies: np.ndarray, s: float) -> np.ndarray:
    """First-order IIR smoothing along time, seeded with the first frame.

    M[0] = E[0]; M[t] = (1 - s) * M[t-1] + s * E[t].
    """
    if not (0.0 < s <= 1.0):
        raise InvalidSmoothingError(f"smoothing coefficient must be in (0, 1], got {s}")
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim != 2 or energies.shape[0] < 1:
        raise EmptyInputError(f"expected a non-empty [T x F] matrix, got shape {energies.shape}")
    if energies.shape[0] == 1:
        return energies.copy()
    # Run the filter from t=1 with state (1-s)*E[0] so M[0] stays bit-equal to E[0].
    zi = ((1.0 - s) * energies[0])[np.newaxis, :]
    tail, _ = lfilter([s], [1.0, -(1.0 - s)], energies[1:], axis=0, zi=zi)
    return np.vstack([energies[:1], tail])


def _check_forward_args(energies: np.ndarray, params: PcenParams) -> np.ndarray:
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim != 2 or energies.shape[0] < 1:
        raise EmptyInputError(f"expected a non-empty [T x F] energy matrix, got shape {energies.shape}")
    if energies.shape[1] != params.n_channels:
        raise ShapeMismatchError(
            f"energy matrix has {energies.shape[1]} channels, params have {params.n_channels}"
        )
    return energies


def pcen_forward(energies: np.ndarray, params: PcenParams) -> tuple[np.ndarray, np.ndarray]:
    """Apply the normalizer; returns (output, smoothed energies).

    The gain divisor is evaluated in the log domain, G = E * exp(-alpha *
    ln(M + eps)), which keeps zero-energy bins exact (G = 0) and makes the
    alpha -> 0 limit return E bit-exactly. Channels with r == 1 skip the
    power stage so the identity parameterization incurs no rounding.
    """
    energies = _check_forward_args(energies, params)
    smoothed = smooth_energies(energies, params.s)
    if params.agc_enabled:
        gain = np.exp(-params.alpha * np.log(smoothed + params.eps))
        controlled = energies * gain
    else:
        controlled = energies
    if params.drc_enabled:
        out = np.power(controlled + params.delta, params.r) - np.power(params.delta, params.r)
        unit = params.r == 1.0
        if np.any(unit):
            out[:, unit] = controlled[:, unit]
    else:
        out = controlled.copy() if controlled is energies else controlled
    return out, smoothed


def pcen_backward(
    energies: np.ndarray,
    smoothed: np.ndarray,
    params: PcenParams,
    upstream: np.ndarray,
) -> PcenGradients:
    """Exact reverse-mode gradients of `pcen_forward`.

    `smoothed` must come from the matching forward call. Per-channel
    parameter gradients accumulate over frames; the input gradient
    combines the direct path with the adjoint of the smoothing recursion
    run backwards in time. Disabled stages contribute identity Jacobians.
    """
    energies = _check_forward_args(energies, params)
    upstream = np.asarray(upstream, dtype=np.float64)
    smoothed = np.asarray(smoothed, dtype=np.float64)
    if upstream.shape != energies.shape or smoothed.shape != energies.shape:
        raise ShapeMismatchError(
            f"shape mismatch: energies {energies.shape}, smoothed {smoothed.shape}, "
            f"upstream {upstream.shape}"
        )
    n_channels = params.n_channels

    if params.agc_enabled:
        gain = np.exp(-params.alpha * np.log(smoothed + params.eps))
        controlled = energies * gain
    else:
        controlled = energies

    if params.drc_enabled:
        base = controlled + params.delta
        slope = params.r * np.power(base, params.r - 1.0)
        g_controlled = upstream * slope
        d_delta = np.sum(
            upstream * (slope - params.r * np.power(params.delta, params.r - 1.0)), axis=0
        )
        d_r = np.sum(
            upstream
            * (
                np.power(base, params.r) * np.log(base)
                - np.power(params.delta, params.r) * np.log(params.delta)
            ),
            axis=0,
        )
    else:
        g_controlled = upstream
        d_delta = np.zeros(n_channels)
        d_r = np.zeros(n_channels)

    if params.agc_enabled:
        d_alpha = np.sum(g_controlled * (-controlled * np.log(smoothed + params.eps)), axis=0)
        direct = g_controlled * gain
        # Adjoint of M[t] = (1-s) M[t-1] + s E[t]: run the same recursion on
        # the reversed direct contributions.
        m_direct = g_controlled * (-params.alpha * controlled / (smoothed + params.eps))
        adjoint = lfilter([1.0], [1.0, -(1.0 - params.s)], m_direct[::-1], axis=0)[::-1]
        d_input = direct + params.s * adjoint
        d_input[0] = direct[0] + adjoint[0]  # M[0] = E[0] couples with unit weight
    else:
        d_alpha = np.zeros(n_channels)
        d_input = g_controlled.copy()

    return PcenGradients(d_alpha=d_alpha, d_delta=d_delta, d_r=d_r, d_input=d_input)
