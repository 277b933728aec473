"""Spectrogram-style image output: exact binary PGM plus matplotlib figures."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateRangeWarning, EmptyInputError


def pgm_bytes(values: np.ndarray) -> bytes:
    """Encode a feature matrix as an 8-bit binary PGM image.

    Width is the frame count, height the channel count, with channel 0 on
    the bottom row. Values are min-max normalized per image to 0..255; a
    constant matrix yields an all-zero image with a warning.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise EmptyInputError(f"expected a non-empty [T x F] matrix, got shape {values.shape}")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        warnings.warn(
            "feature matrix has zero dynamic range; emitting an all-zero image",
            DegenerateRangeWarning,
        )
        pixels = np.zeros(values.shape, dtype=np.uint8)
    else:
        pixels = np.clip(np.rint((values - lo) * (255.0 / (hi - lo))), 0, 255).astype(np.uint8)
    # Image rows run top to bottom: flip so channel 0 lands on the bottom.
    rows = pixels.T[::-1]
    header = f"P5 {values.shape[0]} {values.shape[1]} 255\n".encode("ascii")
    return header + rows.tobytes()


def render_spectrogram(values: np.ndarray, path) -> None:
    """Write the PGM rendering of a feature matrix."""
    blob = pgm_bytes(values)
    with open(path, "wb") as handle:
        handle.write(blob)


def render_figure(values: np.ndarray, path, title: str = "") -> None:
    """Write a matplotlib pseudocolor figure of a feature matrix."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    image = ax.imshow(values.T, origin="lower", aspect="auto", cmap="magma")
    ax.set_xlabel("frame")
    ax.set_ylabel("mel channel")
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, label="feature value")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curve(records: list[dict], path) -> None:
    """Write a matplotlib figure of the fit trajectory (loss and gradient norm)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [rec["step"] for rec in records]
    losses = [rec["loss"] for rec in records]
    norms = [rec["grad_norm"] for rec in records]
    fig, (ax_loss, ax_norm) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax_loss.semilogy(steps, losses)
    ax_loss.set_ylabel("proxy loss")
    ax_norm.semilogy(steps, norms)
    ax_norm.set_ylabel("gradient norm")
    ax_norm.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
