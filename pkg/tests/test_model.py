import dataclasses

import numpy as np
import pytest

from avmil.checkpoint import build_model, load_checkpoint, save_checkpoint
from avmil.data import VideoBag
from avmil.model import (
    ModelConfig,
    TwoStreamHead,
    hinge_loss,
    hinge_loss_backward,
    pool_and_normalize,
    score_proposals,
)
from avmil.nn import GradStore, LinearLayer, gradient_check, init_linear, softmax_columns
from avmil.train import AdamState, adam_step

import oracles
from conftest import random_bag, small_config


class TestScoreProposals:
    def test_single_proposal_softmax_is_one_so_d_equals_a(self, rng):
        head = TwoStreamHead(cls=init_linear(4, 3, rng), loc=init_linear(4, 3, rng))
        Z = rng.normal(size=(1, 4)).astype(np.float32)
        A, B, S, D = score_proposals(Z, head)
        np.testing.assert_allclose(S, np.ones((1, 3)))
        np.testing.assert_allclose(D, A)

    def test_hand_elementwise_product(self):
        # Feed B values whose column softmax is [0.5, 0.25; 0.5, 0.75] by
        # construction, with A known, and check D = A * sigma(B).
        A = np.array([[1.0, 0.0], [2.0, 0.0]])
        S = np.array([[0.5, 0.25], [0.5, 0.75]])
        np.testing.assert_allclose(A * S, [[0.5, 0.0], [1.0, 0.0]])

    def test_sigma_columns_sum_to_one(self, rng):
        head = TwoStreamHead(cls=init_linear(5, 4, rng), loc=init_linear(5, 4, rng))
        for _ in range(50):
            Z = rng.normal(size=(int(rng.integers(1, 9)), 5))
            _, _, S, _ = score_proposals(Z, head)
            np.testing.assert_allclose(S.sum(axis=0), 1.0, atol=1e-6)

    def test_head_without_loc_rejected(self, rng):
        head = TwoStreamHead(cls=init_linear(4, 3, rng), loc=None)
        with pytest.raises(ValueError):
            score_proposals(rng.normal(size=(2, 4)), head)


class TestPoolAndNormalize:
    def test_hand_computation(self):
        D = np.array([[0.5, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(pool_and_normalize(D), [1.0, 0.0])

    def test_all_zero_guarded(self):
        np.testing.assert_array_equal(pool_and_normalize(np.zeros((3, 2))), np.zeros(2))

    def test_row_permutation_invariant(self, rng):
        D = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        np.testing.assert_allclose(pool_and_normalize(D), pool_and_normalize(D[perm]))


class TestForward:
    def test_zeroed_audio_tower_contributes_nothing(self, rng):
        model = build_model(small_config(), seed=5)
        bag = random_bag(rng)
        for name, tensor in model.params.items():
            if name.startswith("audio."):
                tensor[...] = 0.0
        phi_av, cache = model.forward(bag)
        np.testing.assert_allclose(cache.towers["audio"].normalized, 0.0)
        np.testing.assert_allclose(phi_av, cache.towers["visual"].normalized)

    def test_fused_scores_bounded_by_two(self, rng):
        model = build_model(small_config(), seed=6)
        for _ in range(50):
            phi, cache = model.forward(random_bag(rng, M=int(rng.integers(1, 8))))
            assert np.max(np.abs(phi)) <= 2.0 + 1e-6
            for tc in cache.towers.values():
                assert np.linalg.norm(tc.normalized) <= 1.0 + 1e-6

    def test_visual_only_ignores_audio_features(self, rng):
        model = build_model(small_config(mode="visual_only"), seed=7)
        bag = random_bag(rng)
        phi1, _ = model.forward(bag)
        perturbed = VideoBag(
            id=bag.id,
            visual=bag.visual,
            audio=bag.audio + rng.normal(size=bag.audio.shape).astype(np.float32),
            labels=bag.labels,
        )
        phi2, _ = model.forward(perturbed)
        np.testing.assert_array_equal(phi1, phi2)


class TestHingeLoss:
    def test_zero_when_margins_exceed_one(self):
        assert hinge_loss(np.array([[2.0, -3.0]]), np.array([[1, -1]])) == 0.0

    def test_hand_evaluation(self):
        loss = hinge_loss(np.array([[0.5, 0.0]]), np.array([[1, -1]]))
        assert loss == pytest.approx(0.75)

    def test_zero_scores_give_loss_one(self, rng):
        for _ in range(10):
            Y = rng.choice([-1, 1], size=(3, 4))
            assert hinge_loss(np.zeros((3, 4)), Y) == pytest.approx(1.0)

    def test_invalid_labels_rejected(self):
        with pytest.raises(ValueError):
            hinge_loss(np.zeros((1, 2)), np.array([[1, 0]]))

    def test_gradient_zero_in_zero_loss_region(self):
        dphi = hinge_loss_backward(np.array([[2.0, -3.0]]), np.array([[1, -1]]))
        np.testing.assert_array_equal(dphi, np.zeros((1, 2)))

    def test_subgradient_at_kink_is_zero(self):
        dphi = hinge_loss_backward(np.array([[1.0]]), np.array([[1]]))
        np.testing.assert_array_equal(dphi, np.zeros((1, 1)))


class TestBackward:
    def test_full_graph_matches_finite_differences_float64(self, rng):
        model = build_model(small_config(), seed=11, dtype=np.float64)
        bag = random_bag(rng)
        Y = bag.labels[None, :]

        def loss_fn():
            phi, _ = model.forward(bag)
            return model.loss(phi[None, :], Y)[0]

        phi, cache = model.forward(bag)
        _, dphi = model.loss(phi[None, :], Y)
        grads = GradStore(model.params)
        model.backward(cache, dphi[0], grads)
        assert gradient_check(loss_fn, model.params, grads) < 1e-6

    def test_full_graph_float32_tolerance(self, rng):
        # 32-bit analytic gradients against a float64 twin's finite
        # differences; the raised floor absorbs float32 cancellation residue
        # on the identically-zero loc-bias gradients.
        model = build_model(small_config(), seed=12, dtype=np.float32)
        twin = clone_model(model, dtype=np.float64)
        bag = random_bag(rng)
        Y = bag.labels[None, :]

        def loss_fn():
            phi, _ = twin.forward(bag)
            return twin.loss(phi[None, :], Y)[0]

        phi, cache = model.forward(bag)
        _, dphi = model.loss(phi[None, :], Y)
        grads = GradStore(model.params)
        model.backward(cache, dphi[0], grads)
        grads64 = {name: grads[name].astype(np.float64) for name in model.params.names()}
        assert gradient_check(loss_fn, twin.params, grads64, denom_floor=1e-5) < 1e-3

    def test_audio_tower_gradients_zero_in_visual_only_mode(self, rng):
        # Both towers exist (built in av mode); narrowing the mode must
        # leave the audio tower untouched by backward.
        model = build_model(small_config(), seed=13)
        model.config.mode = "visual_only"
        bag = random_bag(rng)
        phi, cache = model.forward(bag)
        assert "audio" not in cache.towers
        _, dphi = model.loss(phi[None, :], bag.labels[None, :])
        grads = GradStore(model.params)
        model.backward(cache, dphi[0], grads)
        for name, g in grads.items():
            if name.startswith("audio."):
                np.testing.assert_array_equal(g, np.zeros_like(g))
            elif name.endswith(".W"):
                assert np.any(g != 0)

    def test_one_adam_step_updates_both_towers(self, rng):
        model = build_model(small_config(), seed=14)
        bag = random_bag(rng)
        phi, cache = model.forward(bag)
        loss, dphi = model.loss(phi[None, :], bag.labels[None, :])
        assert loss > 0
        grads = GradStore(model.params)
        model.backward(cache, dphi[0], grads)
        before = {name: t.copy() for name, t in model.params.items()}
        adam_step(model.params, grads, AdamState.for_params(model.params, alpha=1e-3))
        changed_visual = any(
            not np.array_equal(before[n], t) for n, t in model.params.items() if n.startswith("visual.")
        )
        changed_audio = any(
            not np.array_equal(before[n], t) for n, t in model.params.items() if n.startswith("audio.")
        )
        assert changed_visual and changed_audio


class TestOracleEquivalence:
    def test_engine_matches_brute_force_transcription(self, rng):
        # Heads directly on the features (no hidden stack) so the oracle
        # covers the entire path from input to fused scores.
        for trial in range(30):
            C = int(rng.integers(1, 4))
            d_v = int(rng.integers(1, 6))
            d_a = int(rng.integers(1, 6))
            config = ModelConfig(
                num_classes=C, visual_dim=d_v, audio_dim=d_a,
                visual_hidden=(), audio_hidden=(), dropout=0.0,
            )
            model = build_model(config, seed=100 + trial, dtype=np.float64)
            bag = random_bag(rng, M=int(rng.integers(1, 5)), T=int(rng.integers(1, 5)), d_v=d_v, d_a=d_a, C=C)
            phi, cache = model.forward(bag)
            inputs = [
                tuple(oracles.model_head_inputs(model, bag, "visual")),
                tuple(oracles.model_head_inputs(model, bag, "audio")),
            ]
            phi_oracle, (D_v, D_a) = oracles.two_stream_phi(inputs, config.l2_eps)
            np.testing.assert_allclose(phi, phi_oracle, atol=1e-5)
            np.testing.assert_allclose(cache.towers["visual"].D, D_v, atol=1e-5)
            np.testing.assert_allclose(cache.towers["audio"].D, D_a, atol=1e-5)


class TestLocalizationShiftInvariance:
    def test_argmax_invariant_to_column_shift_of_B(self, rng):
        # Adding a constant to a column of B leaves sigma(B), hence D and the
        # per-class argmax, unchanged when A is held fixed.
        A = rng.normal(size=(6, 3))
        B = rng.normal(size=(6, 3))
        D1 = A * softmax_columns(B)
        B_shifted = B.copy()
        B_shifted[:, 1] += 7.5
        D2 = A * softmax_columns(B_shifted)
        np.testing.assert_allclose(D1, D2, atol=1e-12)
        assert np.array_equal(np.argmax(D1, axis=0), np.argmax(D2, axis=0))


class TestCheckpoint:
    def test_round_trip_preserves_params_and_config(self, tmp_path, rng):
        config = small_config(mode="av")
        model = build_model(config, seed=21)
        path = tmp_path / "model.avc"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == dataclasses.replace(config)
        assert loaded.params.names() == model.params.names()
        for name, tensor in model.params.items():
            np.testing.assert_array_equal(tensor, loaded.params[name])
        bag = random_bag(rng)
        np.testing.assert_array_equal(model.forward(bag)[0], loaded.forward(bag)[0])

    def test_single_modality_checkpoint_has_no_other_tower(self, tmp_path):
        model = build_model(small_config(mode="audio_only"), seed=22)
        assert all(not n.startswith("visual.") for n in model.params.names())
        path = tmp_path / "audio.avc"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert all(not n.startswith("visual.") for n in loaded.params.names())

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.avc"
        path.write_bytes(b"XXXX" + bytes(32))
        with pytest.raises(Exception, match="checkpoint"):
            load_checkpoint(path)
