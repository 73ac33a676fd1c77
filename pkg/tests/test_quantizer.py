"""Quantizer: encoder arithmetic, nearest-neighbor assignment, EMA, K-Means."""
from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from skilldt.errors import ArgumentError, NumericsError
from skilldt.quantizer import (
    SkillCodebook,
    SkillEncoder,
    ema_update,
    kmeans_fit,
    quantize,
    straight_through,
    vq_loss,
)


def brute_force_nearest(embeddings: np.ndarray, latents: np.ndarray) -> np.ndarray:
    """O(N*M) scan with explicit loops; ties resolved to the lowest index."""
    out = np.empty(len(latents), dtype=np.int64)
    for m, z in enumerate(latents):
        best, best_d = 0, None
        for n, e in enumerate(embeddings):
            d = float(((z - e) ** 2).sum())
            if best_d is None or d < best_d:
                best, best_d = n, d
        out[m] = best
    return out


def make_codebook(n=4, d=3, seed=0, **kw) -> SkillCodebook:
    g = torch.Generator().manual_seed(seed)
    emb = torch.randn(n, d, generator=g)
    return SkillCodebook(
        embeddings=emb, ema_counts=torch.ones(n), ema_sums=emb.clone(), **kw
    )


class TestEncoder:
    def test_zero_weights_give_zero_latent(self):
        enc = SkillEncoder(3, 4, hidden_dim=8)
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        out = enc(torch.randn(5, 3))
        assert torch.all(out == 0.0)

    def test_identical_states_identical_latents(self):
        enc = SkillEncoder(3, 4, hidden_dim=8)
        s = torch.randn(1, 3).repeat(6, 1)
        out = enc(s)
        assert torch.all(out == out[0])

    def test_matches_numpy_reimplementation(self):
        # independent re-implementation of the same MLP arithmetic
        torch.manual_seed(3)
        enc = SkillEncoder(5, 4, hidden_dim=16).double()
        states = torch.randn(7, 5, dtype=torch.float64)
        got = enc(states).detach().numpy()

        w = [p.detach().numpy() for p in enc.parameters()]
        x = states.numpy()
        h = np.maximum(x @ w[0].T + w[1], 0.0)
        h = np.maximum(h @ w[2].T + w[3], 0.0)
        expected = h @ w[4].T + w[5]
        np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_nonfinite_input_names_row(self):
        enc = SkillEncoder(2, 3, hidden_dim=4)
        bad = torch.randn(4, 2)
        bad[2, 1] = float("nan")
        with pytest.raises(NumericsError, match="row 2"):
            enc(bad)


class TestQuantize:
    def test_nearest_neighbor(self):
        cb = SkillCodebook(
            embeddings=torch.tensor([[0.0, 0.0], [1.0, 1.0]]),
            ema_counts=torch.ones(2),
            ema_sums=torch.tensor([[0.0, 0.0], [1.0, 1.0]]),
        )
        assign = quantize(cb, torch.tensor([[0.1, 0.2]]))
        assert int(assign.indices[0]) == 0
        assert torch.equal(assign.embeddings[0], cb.embeddings[0])

    def test_tie_breaks_to_lowest_index(self):
        cb = SkillCodebook(
            embeddings=torch.tensor([[0.0, 0.0], [1.0, 1.0]]),
            ema_counts=torch.ones(2),
            ema_sums=torch.tensor([[0.0, 0.0], [1.0, 1.0]]),
        )
        assign = quantize(cb, torch.tensor([[0.5, 0.5]]))
        assert int(assign.indices[0]) == 0

    def test_duplicate_rows_tie_to_lowest(self):
        emb = torch.tensor([[1.0, 2.0], [0.5, 0.5], [0.5, 0.5]])
        cb = SkillCodebook(embeddings=emb, ema_counts=torch.ones(3), ema_sums=emb.clone())
        assign = quantize(cb, torch.randn(64, 2))
        brute = brute_force_nearest(emb.numpy(), assign.latents.numpy())
        np.testing.assert_array_equal(assign.indices.numpy(), brute)

    def test_matches_brute_force(self):
        cb = make_codebook(n=16, d=6, seed=1)
        latents = torch.randn(500, 6, generator=torch.Generator().manual_seed(2))
        assign = quantize(cb, latents)
        brute = brute_force_nearest(cb.embeddings.numpy(), latents.numpy())
        np.testing.assert_array_equal(assign.indices.numpy(), brute)

    def test_idempotent_on_codebook_rows(self):
        cb = make_codebook(n=8, d=4, seed=5)
        assign = quantize(cb, cb.embeddings.clone())
        np.testing.assert_array_equal(assign.indices.numpy(), np.arange(8))


class TestVqLoss:
    def test_identity_is_zero(self):
        z = torch.randn(6, 3)
        assert float(vq_loss(z, z.clone())) == 0.0

    def test_elementwise_mean_convention(self):
        loss = vq_loss(torch.zeros(1, 2), torch.ones(1, 2))
        assert float(loss) == pytest.approx(1.0)

    def test_matches_hand_computed_mean(self):
        g = torch.Generator().manual_seed(7)
        a, b = torch.randn(5, 4, generator=g), torch.randn(5, 4, generator=g)
        expected = float(((a - b) ** 2).mean())
        assert float(vq_loss(a, b)) == pytest.approx(expected, rel=1e-6)

    def test_nonnegative_and_zero_only_at_identity(self):
        g = torch.Generator().manual_seed(8)
        a, b = torch.randn(5, 4, generator=g), torch.randn(5, 4, generator=g)
        assert float(vq_loss(a, b)) > 0.0

    def test_gradient_reaches_latents_not_selected(self):
        a = torch.randn(3, 2, requires_grad=True)
        b = torch.randn(3, 2, requires_grad=True)
        vq_loss(a, b).backward()
        assert a.grad is not None and a.grad.abs().sum() > 0
        assert b.grad is None or b.grad.abs().sum() == 0


class TestStraightThrough:
    def test_forward_equals_selected(self):
        z, e = torch.randn(4, 3), torch.randn(4, 3)
        assert torch.equal(straight_through(z, e), e)

    def test_finite_difference_gradient(self):
        # the pass-through linearizes the quantizer as identity plus a fixed
        # offset; differentiate that explicit function numerically
        torch.manual_seed(0)
        z0 = torch.randn(3, 2, dtype=torch.float64, requires_grad=True)
        selected = torch.randn(3, 2, dtype=torch.float64)
        w = torch.randn(3, 2, dtype=torch.float64)

        def loss_fn(x):
            return (w * x).sum() + (x**2).sum()

        loss_fn(straight_through(z0, selected)).backward()
        analytic = z0.grad.numpy()

        offset = (selected - z0.detach()).numpy()
        eps = 1e-6
        numeric = np.zeros_like(analytic)
        base = z0.detach().numpy()
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += eps
            minus[idx] -= eps
            f_plus = loss_fn(torch.from_numpy(plus + offset))
            f_minus = loss_fn(torch.from_numpy(minus + offset))
            numeric[idx] = (float(f_plus) - float(f_minus)) / (2 * eps)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() < 1e-4

    def test_zero_upstream_gradient_gives_zero(self):
        z = torch.randn(4, 3, requires_grad=True)
        out = straight_through(z, torch.randn(4, 3))
        (out * 0.0).sum().backward()
        assert torch.all(z.grad == 0.0)


class TestEmaUpdate:
    def test_empty_cluster_stays_near_previous(self):
        cb = make_codebook(n=4, d=3, seed=2)
        before = cb.embeddings[3].clone()
        latents = cb.embeddings[0].repeat(10, 1) + 0.01
        ema_update(cb, latents, torch.zeros(10, dtype=torch.int64))
        assert torch.allclose(cb.embeddings[3], before, atol=1e-3)

    def test_decay_free_limit_equals_batch_mean(self):
        cb = make_codebook(n=4, d=3, seed=3, decay=0.0)
        latents = torch.randn(100, 3, generator=torch.Generator().manual_seed(4))
        ema_update(cb, latents, torch.full((100,), 2, dtype=torch.int64))
        np.testing.assert_allclose(
            cb.embeddings[2].numpy(), latents.mean(dim=0).numpy(), atol=1e-6
        )

    def test_invariant_embeddings_equal_sums_over_counts(self):
        cb = make_codebook(n=4, d=3, seed=5)
        g = torch.Generator().manual_seed(6)
        for _ in range(50):
            latents = torch.randn(20, 3, generator=g)
            idx = quantize(cb, latents).indices
            ema_update(cb, latents, idx)
            ratio = cb.ema_sums / cb.ema_counts.clamp_min(1e-12).unsqueeze(1)
            assert torch.allclose(cb.embeddings, ratio, atol=1e-6)
            assert torch.all(cb.ema_counts >= 0)

    def test_converges_to_cluster_means_on_blobs(self):
        rng = np.random.default_rng(0)
        blob_a = rng.normal([-2.0, 0.0], 0.05, size=(50, 2))
        blob_b = rng.normal([2.0, 1.0], 0.05, size=(50, 2))
        pts = torch.from_numpy(np.concatenate([blob_a, blob_b]).astype(np.float32))
        emb = torch.tensor([[-1.0, 0.0], [1.0, 0.0]])
        cb = SkillCodebook(
            embeddings=emb, ema_counts=torch.ones(2), ema_sums=emb.clone(), decay=0.9
        )
        for _ in range(200):
            idx = quantize(cb, pts).indices
            ema_update(cb, pts, idx)
        np.testing.assert_allclose(
            cb.embeddings[0].numpy(), blob_a.mean(axis=0), atol=1e-2
        )
        np.testing.assert_allclose(
            cb.embeddings[1].numpy(), blob_b.mean(axis=0), atol=1e-2
        )

    def test_frozen_codebook_rejected(self):
        cb = make_codebook(n=3, d=2, frozen=True)
        with pytest.raises(ArgumentError):
            ema_update(cb, torch.randn(4, 2), torch.zeros(4, dtype=torch.int64))


class TestKMeans:
    def test_separated_blobs_recovered(self):
        rng = np.random.default_rng(1)
        blob_a = rng.normal([-3.0, 0.0], 0.05, size=(60, 2))
        blob_b = rng.normal([3.0, 2.0], 0.05, size=(60, 2))
        states = np.concatenate([blob_a, blob_b]).astype(np.float32)
        _, cb = kmeans_fit(states, num_codes=2, latent_dim=2, seed=0)
        centers = sorted(cb.embeddings.numpy().tolist())
        expected = sorted([blob_a.mean(axis=0).tolist(), blob_b.mean(axis=0).tolist()])
        np.testing.assert_allclose(centers, expected, atol=1e-2)
        assert cb.frozen

    def test_degenerate_each_center_is_a_state(self):
        states = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        states = np.repeat(states, 4, axis=0)
        _, cb = kmeans_fit(states, num_codes=3, latent_dim=2, seed=3)
        got = {tuple(np.round(r, 6)) for r in cb.embeddings.numpy()}
        assert got == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)}

    def test_same_seed_identical_centers(self):
        rng = np.random.default_rng(2)
        states = rng.standard_normal((80, 3)).astype(np.float32)
        _, cb1 = kmeans_fit(states, 4, 3, seed=9)
        _, cb2 = kmeans_fit(states, 4, 3, seed=9)
        np.testing.assert_array_equal(cb1.embeddings.numpy(), cb2.embeddings.numpy())

    def test_too_few_distinct_states(self):
        states = np.zeros((10, 2), dtype=np.float32)
        with pytest.raises(ArgumentError, match="distinct"):
            kmeans_fit(states, num_codes=2, latent_dim=2)

    def test_projection_used_when_dims_differ(self):
        rng = np.random.default_rng(3)
        states = rng.standard_normal((40, 3)).astype(np.float32)
        enc, cb = kmeans_fit(states, 4, latent_dim=6, seed=1)
        assert cb.embeddings.shape == (4, 6)
        with torch.no_grad():
            latents = enc(torch.from_numpy(states))
        assert latents.shape == (40, 6)


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(2, 8),
    m=st.integers(1, 20),
    d=st.integers(1, 4),
    seed=st.integers(0, 10_000),
)
def test_quantize_always_matches_brute_force(n, m, d, seed):
    g = torch.Generator().manual_seed(seed)
    emb = torch.randn(n, d, generator=g)
    cb = SkillCodebook(embeddings=emb, ema_counts=torch.ones(n), ema_sums=emb.clone())
    latents = torch.randn(m, d, generator=g)
    assign = quantize(cb, latents)
    np.testing.assert_array_equal(
        assign.indices.numpy(), brute_force_nearest(emb.numpy(), latents.numpy())
    )
