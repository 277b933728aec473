"""Parametric channel-normalization acoustic front-ends on mel filterbank
energies, with exact gradients for the trainable variants."""

__version__ = "0.1.0"

from .dsp import (
    AudioBuffer,
    FramingConfig,
    MelEnergies,
    apply_mel,
    frame_signal,
    load_wav,
    mel_filterbank,
    power_spectrum,
    save_wav,
    waveform_to_mel,
)
from .pcen import PcenGradients, PcenParams, pcen_backward, pcen_forward, smooth_energies
from .pcmn import (
    CmnConfig,
    PcmnDirectParams,
    PcmnGradients,
    PcmnSpliceParams,
    cmn_apply,
    pcmn_backward,
    pcmn_direct,
    pcmn_splice_forward,
    splice_frames,
)
from .pipeline import (
    FeatureMatrix,
    FrontendParams,
    FrontendVariant,
    VARIANTS,
    extract_features,
    feature_bytes,
    kernel_init,
    load_config,
    load_params,
    params_digest,
    read_features,
    save_config,
    save_params,
    variant_by_name,
    write_features,
)
from .fitting import (
    FitConfig,
    FitResult,
    ProxyPair,
    fit,
    grad_step,
    gradcheck,
    make_gain_mismatch_task,
    proxy_loss,
)
from .render import pgm_bytes, render_figure, render_loss_curve, render_spectrogram

__all__ = [
    "__version__",
    "AudioBuffer",
    "FramingConfig",
    "MelEnergies",
    "apply_mel",
    "frame_signal",
    "load_wav",
    "mel_filterbank",
    "power_spectrum",
    "save_wav",
    "waveform_to_mel",
    "PcenGradients",
    "PcenParams",
    "pcen_backward",
    "pcen_forward",
    "smooth_energies",
    "CmnConfig",
    "PcmnDirectParams",
    "PcmnGradients",
    "PcmnSpliceParams",
    "cmn_apply",
    "pcmn_backward",
    "pcmn_direct",
    "pcmn_splice_forward",
    "splice_frames",
    "FeatureMatrix",
    "FrontendParams",
    "FrontendVariant",
    "VARIANTS",
    "extract_features",
    "feature_bytes",
    "kernel_init",
    "load_config",
    "load_params",
    "params_digest",
    "read_features",
    "save_config",
    "save_params",
    "variant_by_name",
    "write_features",
    "FitConfig",
    "FitResult",
    "ProxyPair",
    "fit",
    "grad_step",
    "gradcheck",
    "make_gain_mismatch_task",
    "proxy_loss",
    "pgm_bytes",
    "render_figure",
    "render_loss_curve",
    "render_spectrogram",
]
