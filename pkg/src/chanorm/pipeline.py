"""Front-end assembly: variant definitions, kernel initialization, end-to-end
extraction, and parameter / feature-file persistence."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import pcen as _pcen
from . import pcmn as _pcmn
from .dsp import AudioBuffer, FramingConfig, waveform_to_mel
from .errors import (
    InvalidParameterError,
    ParseError,
    SchemaMismatchError,
    ShapeMismatchError,
)
from .pcen import PcenParams
from .pcmn import CmnConfig, PcmnDirectParams, PcmnSpliceParams, SPLICE_CONTEXT

LOG_FLOOR = 1e-10

PARAMS_SCHEMA_VERSION = 1
FEATURE_MAGIC = b"FEA1"

KERNEL_PCEN_ALPHA = 0.98
KERNEL_PCEN_DELTA = 2.0
KERNEL_PCEN_R = 0.5
KERNEL_PCMN_BETA = 1.0
KERNEL_PCMN_ALPHA = 0.5
KERNEL_PCMN_MU0 = 0.0


@dataclass(frozen=True)
class FrontendVariant:
    """One row of the front-end matrix: nonlinearity, post-normalizer, switches."""

    nonlinearity: str  # "log" | "pcen"
    post_norm: str = "none"  # "none" | "cmn" | "pcmn_direct" | "pcmn_splice"
    trainable_pcen: bool = False
    trainable_pcmn: bool = False
    no_agc: bool = False
    no_drc: bool = False

    def __post_init__(self):
        if self.nonlinearity not in ("log", "pcen"):
            raise InvalidParameterError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.post_norm not in ("none", "cmn", "pcmn_direct", "pcmn_splice"):
            raise InvalidParameterError(f"unknown post-normalizer {self.post_norm!r}")
        if (self.no_agc or self.no_drc) and self.nonlinearity != "pcen":
            raise InvalidParameterError("no-agc/no-drc switches apply only to the pcen nonlinearity")
        if self.trainable_pcen and self.nonlinearity != "pcen":
            raise InvalidParameterError("trainable_pcen requires the pcen nonlinearity")
        if self.trainable_pcmn and self.post_norm != "pcmn_splice":
            raise InvalidParameterError("trainable_pcmn requires the splice post-normalizer")

    @property
    def uses_pcen(self) -> bool:
        return self.nonlinearity == "pcen"

    @property
    def trainable(self) -> bool:
        return self.trainable_pcen or self.trainable_pcmn

    @property
    def tag(self) -> str:
        parts = ["apcen" if self.trainable_pcen else self.nonlinearity]
        if self.post_norm == "cmn":
            parts.append("cmn")
        elif self.post_norm == "pcmn_direct":
            parts.append("pcmn")
        elif self.post_norm == "pcmn_splice":
            parts.append("apcmn" if self.trainable_pcmn else "pcmn-splice")
        if self.no_agc:
            parts.append("no-agc")
        if self.no_drc:
            parts.append("no-drc")
        return "+".join(parts)


VARIANTS: dict[str, FrontendVariant] = {
    "log-cmn": FrontendVariant("log", "cmn"),
    "pcen": FrontendVariant("pcen", "none"),
    "log-pcmn": FrontendVariant("log", "pcmn_direct"),
    "pcen-pcmn": FrontendVariant("pcen", "pcmn_direct"),
    "apcen": FrontendVariant("pcen", "none", trainable_pcen=True),
    "log-apcmn": FrontendVariant("log", "pcmn_splice", trainable_pcmn=True),
    "apcen-apcmn": FrontendVariant(
        "pcen", "pcmn_splice", trainable_pcen=True, trainable_pcmn=True
    ),
}


def variant_by_name(name: str, no_agc: bool = False, no_drc: bool = False) -> FrontendVariant:
    """Look up a CLI front-end name, applying the ablation switches."""
    if name not in VARIANTS:
        raise InvalidParameterError(
            f"unknown front-end {name!r}; valid options: {', '.join(sorted(VARIANTS))}"
        )
    variant = VARIANTS[name]
    if no_agc or no_drc:
        variant = replace(variant, no_agc=no_agc, no_drc=no_drc)
    return variant


@dataclass(frozen=True)
class FrontendParams:
    """Bundle of the parameter blocks a variant may need."""

    pcen: PcenParams | None = None
    pcmn_direct: PcmnDirectParams | None = None
    pcmn_splice: PcmnSpliceParams | None = None

    def require(self, variant: FrontendVariant) -> None:
        """Raise SchemaMismatchError if a block the variant needs is absent."""
        if variant.uses_pcen and self.pcen is None:
            raise SchemaMismatchError('missing key "pcen.alpha": no pcen block for a pcen variant')
        if variant.post_norm == "pcmn_direct" and self.pcmn_direct is None:
            raise SchemaMismatchError('missing key "pcmn.beta": no direct pcmn block')
        if variant.post_norm == "pcmn_splice" and self.pcmn_splice is None:
            raise SchemaMismatchError('missing key "pcmn.weights": no splice pcmn block')


@dataclass(frozen=True)
class FeatureMatrix:
    """Extracted features plus provenance: variant tag and parameter digest."""

    values: np.ndarray
    variant_tag: str = ""
    params_digest: str = ""

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def splice_kernel_weights(direct: PcmnDirectParams) -> tuple[np.ndarray, np.ndarray]:
    """Map per-channel (beta, alpha, mu0) onto the splice projection.

    Channel i reads only its own 21-frame context: the center slot gets
    beta[i] - alpha[i]/21, the other slots -alpha[i]/21, and the bias
    -mu0[i]. The projection then reproduces the affine normalizer with a
    centered 21-frame mean (center frame included).
    """
    n = direct.n_channels
    weights = np.zeros((n, n * SPLICE_CONTEXT))
    for i in range(n):
        block = slice(i * SPLICE_CONTEXT, (i + 1) * SPLICE_CONTEXT)
        weights[i, block] = -direct.alpha[i] / SPLICE_CONTEXT
        weights[i, i * SPLICE_CONTEXT + _pcmn.SPLICE_HALF] += direct.beta[i]
    return weights, -direct.mu0.copy()


def kernel_init(variant: FrontendVariant, n_mels: int = 40) -> FrontendParams:
    """Hand-crafted working values, broadcast per channel, as the starting point.

    pcen: alpha 0.98, delta 2.0, r 0.5, s = 1/n_mels; pcmn: beta 1.0,
    alpha 0.5, mu0 0.0 (mapped onto W, b for the splice form).
    """
    ones = np.ones(n_mels)
    pcen_block = None
    pcmn_direct_block = None
    pcmn_splice_block = None
    if variant.uses_pcen:
        pcen_block = PcenParams(
            alpha=KERNEL_PCEN_ALPHA * ones,
            delta=KERNEL_PCEN_DELTA * ones,
            r=KERNEL_PCEN_R * ones,
            s=1.0 / n_mels,
            agc_enabled=not variant.no_agc,
            drc_enabled=not variant.no_drc,
        )
    if variant.post_norm in ("pcmn_direct", "pcmn_splice"):
        direct = PcmnDirectParams(
            beta=KERNEL_PCMN_BETA * ones,
            alpha=KERNEL_PCMN_ALPHA * ones,
            mu0=KERNEL_PCMN_MU0 * ones,
        )
        if variant.post_norm == "pcmn_direct":
            pcmn_direct_block = direct
        else:
            weights, bias = splice_kernel_weights(direct)
            pcmn_splice_block = PcmnSpliceParams(weights=weights, bias=bias)
    return FrontendParams(
        pcen=pcen_block, pcmn_direct=pcmn_direct_block, pcmn_splice=pcmn_splice_block
    )


def log_compress(energies: np.ndarray) -> np.ndarray:
    """Natural log with a fixed floor well below speech energies."""
    return np.log(np.maximum(energies, LOG_FLOOR))


def extract_features(
    audio: AudioBuffer,
    variant: FrontendVariant,
    params: FrontendParams,
    cfg: FramingConfig,
    cmn: CmnConfig | None = None,
) -> FeatureMatrix:
    """Run the full chain: mel energies, nonlinearity, post-normalizer."""
    params.require(variant)
    cmn = cmn or CmnConfig()
    energies = waveform_to_mel(audio, cfg).values
    if variant.uses_pcen:
        features, _ = _pcen.pcen_forward(energies, params.pcen)
    else:
        features = log_compress(energies)
    if variant.post_norm == "cmn":
        features = _pcmn.cmn_apply(features, cmn)
    elif variant.post_norm == "pcmn_direct":
        features = _pcmn.pcmn_direct(features, params.pcmn_direct, cmn)
    elif variant.post_norm == "pcmn_splice":
        features = _pcmn.pcmn_splice_forward(features, params.pcmn_splice)
    return FeatureMatrix(
        values=features, variant_tag=variant.tag, params_digest=params_digest(params)
    )


# --- parameter file (JSON, flat dotted keys, 17-significant-digit decimals) ---


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)!r}")


def params_to_document(params: FrontendParams) -> dict:
    doc: dict = {"schema": PARAMS_SCHEMA_VERSION}
    if params.pcen is not None:
        p = params.pcen
        doc.update(
            {
                "pcen.alpha": p.alpha.tolist(),
                "pcen.delta": p.delta.tolist(),
                "pcen.r": p.r.tolist(),
                "pcen.s": p.s,
                "pcen.eps": p.eps,
                "pcen.agc": p.agc_enabled,
                "pcen.drc": p.drc_enabled,
            }
        )
    if params.pcmn_direct is not None:
        d = params.pcmn_direct
        doc.update(
            {
                "pcmn.mode": "direct",
                "pcmn.beta": d.beta.tolist(),
                "pcmn.alpha": d.alpha.tolist(),
                "pcmn.mu0": d.mu0.tolist(),
            }
        )
    if params.pcmn_splice is not None:
        s = params.pcmn_splice
        doc.update(
            {
                "pcmn.mode": "splice",
                "pcmn.weights": s.weights.reshape(-1).tolist(),
                "pcmn.bias": s.bias.tolist(),
            }
        )
    return doc


def dump_params_text(params: FrontendParams) -> str:
    doc = params_to_document(params)
    lines = [f"  {json.dumps(key)}: {_format_value(value)}" for key, value in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_params(params: FrontendParams, path) -> None:
    """Write the parameter file; decimal values carry 17 significant digits."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dump_params_text(params))


def _require_keys(doc: dict, keys: list[str]) -> None:
    for key in keys:
        if key not in doc:
            raise SchemaMismatchError(f'missing key "{key}" in parameter file')


def params_from_document(doc: dict) -> FrontendParams:
    if doc.get("schema") != PARAMS_SCHEMA_VERSION:
        raise SchemaMismatchError(
            f'expected "schema": {PARAMS_SCHEMA_VERSION}, got {doc.get("schema")!r}'
        )
    pcen_block = None
    pcmn_direct_block = None
    pcmn_splice_block = None
    if any(key.startswith("pcen.") for key in doc):
        _require_keys(
            doc, ["pcen.alpha", "pcen.delta", "pcen.r", "pcen.s", "pcen.eps", "pcen.agc", "pcen.drc"]
        )
        pcen_block = PcenParams(
            alpha=np.asarray(doc["pcen.alpha"], dtype=np.float64),
            delta=np.asarray(doc["pcen.delta"], dtype=np.float64),
            r=np.asarray(doc["pcen.r"], dtype=np.float64),
            s=float(doc["pcen.s"]),
            eps=float(doc["pcen.eps"]),
            agc_enabled=bool(doc["pcen.agc"]),
            drc_enabled=bool(doc["pcen.drc"]),
        )
    if any(key.startswith("pcmn.") for key in doc):
        _require_keys(doc, ["pcmn.mode"])
        mode = doc["pcmn.mode"]
        if mode == "direct":
            _require_keys(doc, ["pcmn.beta", "pcmn.alpha", "pcmn.mu0"])
            pcmn_direct_block = PcmnDirectParams(
                beta=np.asarray(doc["pcmn.beta"], dtype=np.float64),
                alpha=np.asarray(doc["pcmn.alpha"], dtype=np.float64),
                mu0=np.asarray(doc["pcmn.mu0"], dtype=np.float64),
            )
        elif mode == "splice":
            _require_keys(doc, ["pcmn.weights", "pcmn.bias"])
            bias = np.asarray(doc["pcmn.bias"], dtype=np.float64)
            flat = np.asarray(doc["pcmn.weights"], dtype=np.float64)
            expected = bias.shape[0] * bias.shape[0] * SPLICE_CONTEXT
            if flat.size != expected:
                raise SchemaMismatchError(
                    f'"pcmn.weights" has {flat.size} entries, expected {expected} '
                    f"(row-major F x (F*{SPLICE_CONTEXT}))"
                )
            pcmn_splice_block = PcmnSpliceParams(
                weights=flat.reshape(bias.shape[0], -1), bias=bias
            )
        else:
            raise SchemaMismatchError(f'"pcmn.mode" must be "direct" or "splice", got {mode!r}')
    return FrontendParams(
        pcen=pcen_block, pcmn_direct=pcmn_direct_block, pcmn_splice=pcmn_splice_block
    )


def load_params(path) -> FrontendParams:
    """Read and validate a parameter file."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top-level value must be an object")
    return params_from_document(doc)


def params_digest(params: FrontendParams) -> str:
    """Stable digest of every parameter value, for feature provenance."""
    return hashlib.sha256(dump_params_text(params).encode("utf-8")).hexdigest()[:16]


# --- pipeline config file (framing plus mean-estimator settings) ---

_CONFIG_FIELDS = (
    "sample_rate",
    "frame_len_ms",
    "hop_ms",
    "fft_size",
    "n_mels",
    "fmin_hz",
    "fmax_hz",
    "window",
    "mel_scale",
    "pre_emphasis",
    "dither",
)


def save_config(cfg: FramingConfig, path, cmn: CmnConfig | None = None) -> None:
    doc = {"schema": PARAMS_SCHEMA_VERSION}
    doc.update({name: getattr(cfg, name) for name in _CONFIG_FIELDS})
    if cmn is not None:
        doc["cmn_mode"] = cmn.mode
        doc["cmn_window_half"] = cmn.window_half
    with open(path, "w", encoding="utf-8") as handle:
        lines = [f"  {json.dumps(k)}: {_format_value(v)}" for k, v in doc.items()]
        handle.write("{\n" + ",\n".join(lines) + "\n}\n")


def load_config(path) -> tuple[FramingConfig, CmnConfig | None]:
    """Read a pipeline config file; absent keys keep their defaults."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top-level value must be an object")
    if doc.get("schema", PARAMS_SCHEMA_VERSION) != PARAMS_SCHEMA_VERSION:
        raise SchemaMismatchError(f'expected "schema": {PARAMS_SCHEMA_VERSION}, got {doc.get("schema")!r}')
    unknown = set(doc) - set(_CONFIG_FIELDS) - {"schema", "cmn_mode", "cmn_window_half"}
    if unknown:
        raise SchemaMismatchError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = FramingConfig(**{name: doc[name] for name in _CONFIG_FIELDS if name in doc})
    cmn = None
    if "cmn_mode" in doc or "cmn_window_half" in doc:
        cmn = CmnConfig(
            mode=doc.get("cmn_mode", "full_utterance"),
            window_half=int(doc.get("cmn_window_half", _pcmn.DEFAULT_SLIDING_HALF)),
        )
    return cfg, cmn


# --- feature files: binary "FEA1" and delimited CSV ---


def write_features(values: np.ndarray, path, fmt: str = "bin") -> None:
    """Persist a feature matrix at 32-bit precision, binary or CSV."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeMismatchError(f"feature matrix must be 2-D, got shape {values.shape}")
    data = values.astype("<f4")
    if fmt == "bin":
        with open(path, "wb") as handle:
            handle.write(FEATURE_MAGIC)
            handle.write(struct.pack("<II", data.shape[0], data.shape[1]))
            handle.write(data.tobytes())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8") as handle:
            for row in data:
                handle.write(",".join(str(v) for v in row) + "\n")
    else:
        raise InvalidParameterError(f"unknown feature format {fmt!r}, expected 'bin' or 'csv'")


def feature_bytes(values: np.ndarray) -> bytes:
    """The exact byte content `write_features(..., fmt='bin')` produces."""
    data = np.asarray(values).astype("<f4")
    return FEATURE_MAGIC + struct.pack("<II", data.shape[0], data.shape[1]) + data.tobytes()


def read_features(path) -> np.ndarray:
    """Read a binary feature file back as a [T x F] float32 matrix."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != FEATURE_MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header")
    n_frames, n_channels = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n_frames * n_channels
    if len(blob) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {n_frames}x{n_channels}, got {len(blob)}")
    return np.frombuffer(blob[12:], dtype="<f4").reshape(n_frames, n_channels)
