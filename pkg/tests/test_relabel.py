"""Hindsight labels: histogram construction, relabelling, window slicing."""
from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from skilldt.errors import ArgumentError
from skilldt.quantizer import SkillCodebook, SkillEncoder
from skilldt.relabel import generate_histograms, relabel_dataset, slice_labels

from conftest import make_dataset


def suffix_count_histograms(indices, num_skills):
    """Independent oracle: count each suffix forwards, then normalize."""
    T = len(indices)
    out = np.zeros((T, num_skills), dtype=np.float64)
    for t in range(T):
        counts = np.zeros(num_skills, dtype=np.float64)
        for idx in indices[t:]:
            counts[idx] += 1.0
        out[t] = counts / counts.sum()
    return out


def make_snapshot(state_dim=2, latent_dim=4, num_codes=3, seed=0):
    torch.manual_seed(seed)
    enc = SkillEncoder(state_dim, latent_dim, hidden_dim=8)
    emb = torch.randn(num_codes, latent_dim)
    cb = SkillCodebook(embeddings=emb, ema_counts=torch.ones(num_codes), ema_sums=emb.clone())
    return enc, cb


class TestGenerateHistograms:
    def test_worked_example(self):
        hist = generate_histograms(np.array([0, 1, 1]), 2)
        np.testing.assert_allclose(
            hist, [[1 / 3, 2 / 3], [0.0, 1.0], [0.0, 1.0]], atol=1e-12
        )

    def test_constant_sequence_is_one_hot(self):
        hist = generate_histograms(np.full(7, 3), 5)
        expected = np.zeros(5)
        expected[3] = 1.0
        np.testing.assert_allclose(hist, np.tile(expected, (7, 1)), atol=0)

    def test_last_row_one_hot(self):
        idx = np.array([2, 0, 1, 1, 4])
        hist = generate_histograms(idx, 5)
        expected = np.zeros(5)
        expected[4] = 1.0
        np.testing.assert_allclose(hist[-1], expected)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        idx = rng.integers(0, 6, size=20)
        hist = generate_histograms(idx, 6)
        np.testing.assert_allclose(hist.sum(axis=1), 1.0, atol=1e-6)
        assert hist.min() >= 0.0 and hist.max() <= 1.0

    def test_telescoping(self):
        rng = np.random.default_rng(1)
        idx = rng.integers(0, 4, size=15)
        hist = generate_histograms(idx, 4)
        T = len(idx)
        for t in range(T - 1):
            lhs = (T - t) * hist[t] - (T - t - 1) * hist[t + 1]
            one_hot = np.zeros(4)
            one_hot[idx[t]] = 1.0
            np.testing.assert_allclose(lhs, one_hot, atol=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ArgumentError):
            generate_histograms(np.array([], dtype=np.int64), 4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ArgumentError):
            generate_histograms(np.array([0, 5]), 4)

    @settings(max_examples=100, deadline=None)
    @given(
        data=st.lists(st.integers(0, 9), min_size=1, max_size=40),
        num_skills=st.integers(10, 16),
    )
    def test_matches_suffix_count_oracle(self, data, num_skills):
        idx = np.array(data, dtype=np.int64)
        got = generate_histograms(idx, num_skills)
        np.testing.assert_allclose(got, suffix_count_histograms(idx, num_skills), atol=1e-12)


class TestRelabelDataset:
    def test_deterministic(self):
        ds = make_dataset(num=3, T=6, S=2)
        enc, cb = make_snapshot()
        l1 = relabel_dataset(ds, enc, cb)
        l2 = relabel_dataset(ds, enc, cb)
        for a, b in zip(l1, l2):
            np.testing.assert_array_equal(a.skill_indices, b.skill_indices)
            np.testing.assert_array_equal(a.histograms, b.histograms)
            np.testing.assert_array_equal(a.skill_embeddings, b.skill_embeddings)

    def test_every_state_labeled_once(self):
        ds = make_dataset(num=4, T=5, S=2)
        enc, cb = make_snapshot(num_codes=4)
        labeled = relabel_dataset(ds, enc, cb)
        assert sum(lab.length for lab in labeled) == sum(
            t.length for t in ds.trajectories
        )
        for lab, traj in zip(labeled, ds.trajectories):
            assert lab.skill_indices.shape == (traj.length,)
            assert lab.histograms.shape == (traj.length, 4)

    def test_codebook_permutation_equivariance(self):
        ds = make_dataset(num=3, T=8, S=2, seed=11)
        enc, cb = make_snapshot(num_codes=4, seed=2)
        perm = np.array([2, 0, 3, 1])
        cb_perm = SkillCodebook(
            embeddings=cb.embeddings[torch.from_numpy(perm)],
            ema_counts=cb.ema_counts[torch.from_numpy(perm)],
            ema_sums=cb.ema_sums[torch.from_numpy(perm)],
        )
        base = relabel_dataset(ds, enc, cb)
        permuted = relabel_dataset(ds, enc, cb_perm)
        inverse = np.argsort(perm)  # cb row i lives at inverse[i] in cb_perm
        for a, b in zip(base, permuted):
            np.testing.assert_array_equal(inverse[a.skill_indices], b.skill_indices)
            # permuted column j holds the original column perm[j]
            np.testing.assert_allclose(b.histograms, a.histograms[:, perm], atol=1e-7)

    def test_histograms_match_indices(self):
        ds = make_dataset(num=2, T=6, S=2)
        enc, cb = make_snapshot(num_codes=3)
        for lab in relabel_dataset(ds, enc, cb):
            np.testing.assert_allclose(
                lab.histograms,
                generate_histograms(lab.skill_indices, 3).astype(np.float32),
                atol=1e-7,
            )


class TestSliceLabels:
    def test_full_window_no_padding(self):
        ds = make_dataset(num=1, T=6, S=2)
        enc, cb = make_snapshot()
        lab = relabel_dataset(ds, enc, cb)[0]
        hist, emb, idx, mask = slice_labels(lab, 0, 6)
        assert mask.all()
        np.testing.assert_array_equal(hist, lab.histograms)
        np.testing.assert_array_equal(emb, lab.skill_embeddings)
        np.testing.assert_array_equal(idx, lab.skill_indices)

    def test_boundary_padding(self):
        ds = make_dataset(num=1, T=6, S=2)
        enc, cb = make_snapshot()
        lab = relabel_dataset(ds, enc, cb)[0]
        hist, emb, idx, mask = slice_labels(lab, 5, 3)
        np.testing.assert_array_equal(mask, [True, False, False])
        assert np.all(hist[1:] == 0.0)
        assert np.all(emb[1:] == 0.0)

    def test_out_of_range_start(self):
        ds = make_dataset(num=1, T=6, S=2)
        enc, cb = make_snapshot()
        lab = relabel_dataset(ds, enc, cb)[0]
        with pytest.raises(ArgumentError):
            slice_labels(lab, 6, 3)
        with pytest.raises(ArgumentError):
            slice_labels(lab, -1, 3)
