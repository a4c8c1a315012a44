"""Shared fixtures and independent oracle helpers.

Oracles here are deliberately naive (direct summation, pair counting,
FFT peak measurement, bootstrap resampling) so they stay independent of
the implementation paths they check.
"""

import math

import numpy as np
import pytest


# -- signal helpers -------------------------------------------------------------


def make_tone(freq_hz, duration_s=1.2, sample_rate=16000, amplitude=0.5):
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    return (amplitude * np.sin(2.0 * np.pi * freq_hz * t)).astype(np.float32)


def dominant_frequency(x, sample_rate):
    """FFT peak with parabolic interpolation for sub-bin accuracy."""
    x = np.asarray(x, dtype=np.float64)
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    k = int(np.argmax(spectrum))
    if 0 < k < len(spectrum) - 1:
        denom = spectrum[k - 1] - 2.0 * spectrum[k] + spectrum[k + 1]
        if denom != 0.0:
            k = k + 0.5 * (spectrum[k - 1] - spectrum[k + 1]) / denom
    return k * sample_rate / len(x)


# -- conv / pooling oracles ------------------------------------------------------


def conv1d_reference(x, weights, bias, stride, padding):
    """Direct-summation convolution oracle for (C, L) input."""
    out_channels, in_channels, kernel = weights.shape
    xp = np.pad(x, ((0, 0), (padding, padding)))
    t_out = (xp.shape[1] - kernel) // stride + 1
    out = np.zeros((out_channels, t_out))
    for o in range(out_channels):
        for t in range(t_out):
            acc = bias[o]
            for i in range(in_channels):
                for k in range(kernel):
                    acc += weights[o, i, k] * xp[i, t * stride + k]
            out[o, t] = acc
    return out


# -- AUC oracles -------------------------------------------------------------------


def pairwise_auc(scores, labels):
    """Brute-force Mann-Whitney AUC: every positive/negative pair scored
    1 / one-half / 0, accumulated exactly in integers."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    wins = int((pos > neg).sum())
    ties = int((pos == neg).sum())
    m_n = pos.shape[0] * neg.shape[1]
    return (2 * wins + ties) / (2.0 * m_n)


def _rank_auc_rows(matrix, n_pos):
    """Per-row rank AUC for a (B, m+n) score matrix with positives first.

    Assumes no ties between positive and negative scores within a row
    (ties among equal duplicated same-class scores are harmless: permuting
    ranks within a class leaves the rank sum unchanged).
    """
    order = np.argsort(matrix, axis=1)
    ranks = np.empty_like(order)
    b = matrix.shape[0]
    cols = np.arange(matrix.shape[1])
    ranks[np.arange(b)[:, None], order] = cols + 1
    m = n_pos
    n = matrix.shape[1] - n_pos
    pos_rank_sum = ranks[:, :m].sum(axis=1)
    return (pos_rank_sum - m * (m + 1) / 2.0) / (m * n)


def stratified_bootstrap_p(scores_a, scores_b, labels, n_boot=30000, seed=0,
                           chunk=5000):
    """Bootstrap-z oracle for the paired AUC difference.

    Resamples positives and negatives separately (class counts fixed), the
    same indices applied to both models; the p-value comes from the
    observed difference over the bootstrap standard error.
    """
    scores_a = np.asarray(scores_a, dtype=np.float64)
    scores_b = np.asarray(scores_b, dtype=np.float64)
    labels = np.asarray(labels)
    pos_idx = np.nonzero(labels == 1)[0]
    neg_idx = np.nonzero(labels == 0)[0]
    m, n = len(pos_idx), len(neg_idx)
    d_obs = pairwise_auc(scores_a, labels) - pairwise_auc(scores_b, labels)
    rng = np.random.default_rng(seed)
    deltas = np.empty(n_boot)
    filled = 0
    while filled < n_boot:
        b = min(chunk, n_boot - filled)
        pi = pos_idx[rng.integers(0, m, size=(b, m))]
        ni = neg_idx[rng.integers(0, n, size=(b, n))]
        idx = np.concatenate([pi, ni], axis=1)
        auc_a = _rank_auc_rows(scores_a[idx], m)
        auc_b = _rank_auc_rows(scores_b[idx], m)
        deltas[filled : filled + b] = auc_a - auc_b
        filled += b
    se = deltas.std(ddof=1)
    if se == 0.0:
        return 1.0
    return math.erfc(abs(d_obs / se) / math.sqrt(2.0))


# -- shared corpus / training fixtures ------------------------------------------


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """The default synthetic corpus (50/50 train, 20/20 val): task A."""
    from angernet.data import SyntheticSpec, generate_synthetic_dataset

    root = tmp_path_factory.mktemp("corpus_a")
    entries, manifest = generate_synthetic_dataset(
        SyntheticSpec(), root, np.random.default_rng(42)
    )
    return {"root": root, "entries": entries, "manifest": manifest}


@pytest.fixture(scope="session")
def trained_run(synth_corpus, tmp_path_factory):
    """A scratch training run on task A with best-checkpoint selection.

    Shared by the end-to-end, transfer, and CLI tests; early-stops once
    validation AU-ROC clears the acceptance threshold.
    """
    from angernet.train import TrainConfig, run_training

    out_dir = tmp_path_factory.mktemp("run_a")
    cfg = TrainConfig(max_steps=2000, val_every=100, seed=11, stop_at_val_auc=0.97)
    state, net = run_training(
        cfg, synth_corpus["entries"], root=synth_corpus["root"], out_dir=out_dir
    )
    return {"state": state, "net": net, "out_dir": out_dir, "cfg": cfg,
            "corpus": synth_corpus}
