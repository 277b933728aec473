"""Acceptance gate: one test per release criterion, each printing a pass line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines.
"""

import shutil
import subprocess
import time

import numpy as np
import pytest

from chanorm import (
    AudioBuffer,
    CmnConfig,
    FitConfig,
    FramingConfig,
    PcenParams,
    PcmnDirectParams,
    PcmnSpliceParams,
    cmn_apply,
    extract_features,
    feature_bytes,
    fit,
    kernel_init,
    load_params,
    load_wav,
    make_gain_mismatch_task,
    pcen_forward,
    pcmn_direct,
    pcmn_splice_forward,
    pgm_bytes,
    read_features,
    save_params,
    save_wav,
    smooth_energies,
    variant_by_name,
    write_features,
)
from chanorm.fitting import check_pcen_gradients, check_pcmn_gradients, draw_pcen_params
from chanorm.pcmn import SPLICE_CONTEXT, SPLICE_HALF
from chanorm.pipeline import FrontendParams, splice_kernel_weights

# Frozen from an independent scalar evaluation (math.pow chain) of
# E=4, alpha=0.98, delta=2, r=0.5, eps=1e-6, M=E.
SPOT_VALUE = 0.32593401032533587


def passed(n, text):
    print(f"[acceptance] criterion {n}: PASS - {text}")


def test_criterion_1_gradient_suite():
    start = time.monotonic()
    for draw in range(100):
        rng = np.random.default_rng(1000 + draw)
        t, f = int(rng.integers(2, 17)), int(rng.integers(1, 9))
        agc, drc = [(True, True), (True, True), (True, False), (False, True)][draw % 4]
        params = draw_pcen_params(rng, f, agc_enabled=agc, drc_enabled=drc)
        report = check_pcen_gradients(
            rng.uniform(0.1, 10.0, (t, f)), params, rng.standard_normal((t, f))
        )
        for key, entry in report.items():
            assert entry.max_rel_err < 1e-4, (draw, key, entry.max_rel_err)
    for draw in range(100):
        rng = np.random.default_rng(2000 + draw)
        t, f = int(rng.integers(1, 17)), int(rng.integers(1, 9))
        params = PcmnSpliceParams(
            weights=0.3 * rng.standard_normal((f, f * SPLICE_CONTEXT)),
            bias=0.3 * rng.standard_normal(f),
        )
        report = check_pcmn_gradients(
            rng.uniform(-5.0, 5.0, (t, f)), params, rng.standard_normal((t, f))
        )
        for key, entry in report.items():
            assert entry.max_rel_err < 1e-6, (draw, key, entry.max_rel_err)
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"gradient suite took {elapsed:.1f}s"
    passed(1, f"200 finite-difference draws within tolerance in {elapsed:.1f}s")


def test_criterion_2_algebraic_reductions_exact():
    rng = np.random.default_rng(42)
    ones = np.ones(6)
    cmn_params = PcmnDirectParams(beta=ones, alpha=ones, mu0=np.zeros(6))
    for _ in range(50):
        features = 4.0 * rng.standard_normal((int(rng.integers(2, 50)), 6))
        for cfg in (CmnConfig(), CmnConfig(mode="sliding", window_half=3)):
            assert np.array_equal(
                pcmn_direct(features, cmn_params, cfg), cmn_apply(features, cfg)
            )
    identity_params = PcenParams(alpha=1e-18 * ones, delta=2.0 * ones, r=ones)
    for _ in range(50):
        energies = rng.uniform(0.0, 10.0, (int(rng.integers(1, 40)), 6))
        out, _ = pcen_forward(energies, identity_params)
        assert np.array_equal(out, energies)
    table = PcenParams(alpha=0.98 * ones, delta=2.0 * ones, r=0.5 * ones)
    energies = rng.uniform(0.5, 5.0, (20, 6))
    energies[::3, 2] = 0.0
    out, _ = pcen_forward(energies, table)
    assert np.all(out[::3, 2] == 0.0)
    passed(2, "affine and limit reductions hold bit-exactly; zero energy maps to zero")


def test_criterion_3_splice_direct_equivalence():
    rng = np.random.default_rng(7)
    direct = PcmnDirectParams(beta=np.ones(40), alpha=0.5 * np.ones(40), mu0=np.zeros(40))
    weights, bias = splice_kernel_weights(direct)
    splice = PcmnSpliceParams(weights=weights, bias=bias)
    worst = 0.0
    for _ in range(20):
        t = int(rng.integers(25, 60))
        features = 3.0 * rng.standard_normal((t, 40))
        got = pcmn_splice_forward(features, splice)
        for frame in range(SPLICE_HALF, t - SPLICE_HALF):
            mu = features[frame - SPLICE_HALF : frame + SPLICE_HALF + 1].mean(axis=0)
            want = direct.beta * features[frame] - (direct.alpha * mu + direct.mu0)
            worst = max(worst, float(np.max(np.abs(got[frame] - want))))
    assert worst < 1e-9
    passed(3, f"splice projection matches the direct form on interior frames (max {worst:.2e})")


def test_criterion_4_smoother_closed_form():
    worst = 0.0
    for s in (0.025, 0.1, 0.5):
        step = np.ones((201, 1))
        step[0, 0] = 0.0
        out = smooth_energies(step, s).ravel()
        closed = 1.0 - (1.0 - s) ** np.arange(201)
        worst = max(worst, float(np.max(np.abs(out - closed))))
    assert worst < 1e-12
    passed(4, f"step response matches the geometric closed form (max {worst:.2e})")


def test_criterion_5_gain_invariance():
    rng = np.random.default_rng(11)
    energies = rng.uniform(1.0, 80.0, (60, 10))
    params = PcenParams(
        alpha=np.ones(10), delta=2.0 * np.ones(10), r=0.5 * np.ones(10), drc_enabled=False
    )
    base, _ = pcen_forward(energies, params)
    worst = 0.0
    for k in (0.1, 10.0):
        scaled, _ = pcen_forward(k * energies, params)
        worst = max(worst, float(np.max(np.abs(scaled - base) / np.abs(base))))
    assert worst < 1e-3
    passed(5, f"gain control cancels x0.1 / x10 energy scaling (max rel change {worst:.2e})")


def test_criterion_6_spot_value():
    out, smoothed = pcen_forward(
        np.array([[4.0]]),
        PcenParams(alpha=np.array([0.98]), delta=np.array([2.0]), r=np.array([0.5])),
    )
    assert smoothed[0, 0] == 4.0
    assert abs(out[0, 0] - SPOT_VALUE) < 1e-9
    passed(6, f"single-cell evaluation matches the frozen oracle value {SPOT_VALUE!r}")


def test_criterion_7_fit_demo():
    variant = variant_by_name("apcen")
    start = time.monotonic()
    pairs = make_gain_mismatch_task(seed=0)
    first = fit(
        pairs, variant, kernel_init(variant, 40), FitConfig(learning_rate=0.05, steps=500, seed=0)
    )
    elapsed = time.monotonic() - start
    assert first.final_loss <= 0.5 * first.initial_loss, (
        first.initial_loss,
        first.final_loss,
    )
    assert elapsed < 60.0, f"fit took {elapsed:.1f}s"
    second = fit(
        make_gain_mismatch_task(seed=0),
        variant,
        kernel_init(variant, 40),
        FitConfig(learning_rate=0.05, steps=500, seed=0),
    )
    assert first.steps == second.steps
    assert np.array_equal(first.params.pcen.alpha, second.params.pcen.alpha)
    reduction = 100.0 * (1.0 - first.final_loss / first.initial_loss)
    passed(7, f"proxy loss falls {reduction:.1f}% in 500 steps ({elapsed:.1f}s), bit-reproducible")


def test_criterion_8_formats(tmp_path):
    rng = np.random.default_rng(3)
    # binary feature round trip
    values = rng.standard_normal((37, 12))
    feat_path = tmp_path / "f.feat"
    write_features(values, feat_path)
    assert np.array_equal(read_features(feat_path), values.astype(np.float32))
    # params round trip, awkward decimals included
    params = FrontendParams(
        pcen=PcenParams(
            alpha=rng.uniform(0.01, 1.0, 12),
            delta=rng.uniform(0.01, 10.0, 12),
            r=rng.uniform(0.01, 1.0, 12),
            s=0.1234567890123456789,
        )
    )
    params_path = tmp_path / "p.json"
    save_params(params, params_path)
    loaded = load_params(params_path)
    assert np.array_equal(loaded.pcen.alpha, params.pcen.alpha)
    assert np.array_equal(loaded.pcen.delta, params.pcen.delta)
    assert np.array_equal(loaded.pcen.r, params.pcen.r)
    assert loaded.pcen.s == params.pcen.s
    # CLI extraction byte-identical to the library path
    cli = shutil.which("chanorm")
    assert cli is not None, "chanorm console script not installed"
    wav_path = tmp_path / "u.wav"
    save_wav(wav_path, AudioBuffer(np.clip(0.1 * rng.standard_normal(16000), -1, 1), 16000))
    out_path = tmp_path / "u.feat"
    proc = subprocess.run(
        [cli, "extract", "--frontend", "log-cmn", "--input", str(wav_path), "--output", str(out_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    variant = variant_by_name("log-cmn")
    lib = extract_features(load_wav(wav_path), variant, kernel_init(variant, 40), FramingConfig())
    assert out_path.read_bytes() == feature_bytes(lib.values)
    # exact image header
    header = pgm_bytes(lib.values).partition(b"\n")[0]
    assert header == b"P5 98 40 255"
    passed(8, "feature, parameter, CLI, and image byte formats are exact")


def test_criterion_9_variant_rows():
    rng = np.random.default_rng(5)
    audio = AudioBuffer(np.clip(0.1 * rng.standard_normal(16000), -1, 1), 16000)
    cfg = FramingConfig()
    rows = [
        ("log-cmn", {}),
        ("pcen", {}),
        ("log-pcmn", {}),
        ("pcen-pcmn", {}),
        ("apcen", {"no_drc": True}),
        ("apcen", {"no_agc": True}),
    ]
    for name, ablation in rows:
        variant = variant_by_name(name, **ablation)
        features = extract_features(audio, variant, kernel_init(variant, 40), cfg)
        assert features.values.shape == (98, 40)
        assert np.all(np.isfinite(features.values)), (name, ablation)
    passed(9, "all six front-end rows construct and produce finite features")
