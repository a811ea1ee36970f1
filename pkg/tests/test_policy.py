import math

import numpy as np
import pytest

from spatialrl.advantage import AdvantageSet, compute_group_advantages
from spatialrl.format_check import format_reward
from spatialrl.policy import (
    GridPolicy,
    GridPolicyParams,
    feasible_bin_centers,
    logprob_grad,
    masked_log_softmax,
    mixture_probs,
    policy_objective,
    train,
)
from spatialrl.rollout import parse_rollout
from spatialrl.trajectory import run_group

from .helpers import sampled_group, sampled_policy_and_group, tiny_task


class TestBinCenters:
    def test_z_bins_span_the_feasible_band(self, fixture_task):
        centers = feasible_bin_centers(fixture_task, 24)
        assert centers[0, 2, 0] == pytest.approx(0.5)
        assert centers[0, 2, -1] == pytest.approx(2.5)

    def test_xy_bins_keep_boxes_inside(self, fixture_task):
        centers = feasible_bin_centers(fixture_task, 24)
        assert centers[0, 0, 0] == pytest.approx(0.5)
        assert centers[0, 0, -1] == pytest.approx(5.5)
        assert centers[0, 1, -1] == pytest.approx(4.5)


class TestSampling:
    def test_rollouts_always_format_clean(self, fixture_task):
        policy = GridPolicy(GridPolicyParams.for_task(fixture_task, 3, 24))
        for seed in range(10):
            text, _ = policy.sample(fixture_task, 1, None, None, seed)
            parsed = parse_rollout(text)
            assert format_reward(parsed, fixture_task).score == 1.0

    def test_fixture_seed_seven(self, fixture_task):
        policy = GridPolicy(GridPolicyParams.for_task(fixture_task, 3, 24))
        text, tokens = policy.sample(fixture_task, 1, None, None, 7)
        assert format_reward(parse_rollout(text), fixture_task).score == 1.0
        coord_tokens = [t for t in tokens if t.meta is not None]
        assert len(coord_tokens) == 12

    def test_determinism_per_seed(self, fixture_task):
        policy = GridPolicy(GridPolicyParams.for_task(fixture_task, 3, 24))
        a = policy.sample(fixture_task, 1, None, None, 99)
        b = policy.sample(fixture_task, 1, None, None, 99)
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_deterministic_limit(self, fixture_task):
        params = GridPolicyParams.for_task(fixture_task, 1, 6, explore_eps=0.0)
        params.logits[:, :, :, 2] = 50.0
        policy = GridPolicy(params)
        texts = {policy.sample(fixture_task, 1, None, None, seed)[0] for seed in range(8)}
        assert len(texts) == 1

    def test_uniform_two_bins_logprob(self, fixture_task):
        params = GridPolicyParams.for_task(fixture_task, 1, 2, explore_eps=0.0)
        policy = GridPolicy(params)
        _, tokens = policy.sample(fixture_task, 1, None, None, 3)
        for tok in tokens:
            if tok.meta is not None:
                assert tok.logprob_new == pytest.approx(math.log(0.5))

    def test_mixture_floor_keeps_all_bins_reachable(self):
        row = np.array([50.0, 0.0, 0.0, 0.0])
        p_soft, p_mix = mixture_probs(row, [], 0.1)
        assert p_soft[1] == pytest.approx(0.0, abs=1e-12)
        assert p_mix[1] == pytest.approx(0.025)
        assert p_mix.sum() == pytest.approx(1.0)

    def test_masked_bin_is_unreachable(self):
        row = np.zeros(4)
        _, p_mix = mixture_probs(row, [2], 0.1)
        assert p_mix[2] == 0.0
        assert p_mix.sum() == pytest.approx(1.0)

    def test_all_bins_masked_is_an_error(self):
        with pytest.raises(ValueError):
            masked_log_softmax(np.zeros(2), [0, 1])

    def test_collision_feedback_masks_previous_bin(self, fixture_task):
        params = GridPolicyParams.for_task(fixture_task, 2, 4, explore_eps=0.0)
        params.logits[0, :, :, :] = 0.0
        policy = GridPolicy(params)
        group = run_group(policy, fixture_task, 2, 2, 0.9, seed=13)
        for traj in group.trajectories:
            first, second = traj.turns
            collided = {
                oid for pair in first.feedback.colliding_pairs for oid in pair
            }
            if not collided:
                continue
            prev_bins = {
                (tok.meta["object_index"], tok.meta["axis"]): tok.meta["bin"]
                for tok in first.tokens
                if tok.meta is not None
            }
            for tok in second.tokens:
                meta = tok.meta
                if meta is None:
                    continue
                oid = fixture_task.objects[meta["object_index"]].id
                if oid in collided:
                    prev = prev_bins[(meta["object_index"], meta["axis"])]
                    assert meta["masked_bins"] == [prev]
                    assert meta["bin"] != prev


class TestGradient:
    def test_zero_advantage_zero_kl_gives_zero_gradient(self, fixture_task):
        group = sampled_group(fixture_task, seed=4)
        params = GridPolicyParams.for_task(fixture_task, 2, 6)
        zero = AdvantageSet(
            advantages=tuple(
                tuple(0.0 for _ in traj.token_records()) for traj in group.trajectories
            ),
            group_mean=0.0,
            group_std=1.0,
        )
        grad = logprob_grad(params, group, zero, 0.2, 0.0)
        assert np.all(grad == 0.0)

    def test_single_token_gradient_matches_hand_derivation(self):
        task = tiny_task(1)
        params = GridPolicyParams.for_task(task, 1, 2, explore_eps=0.0)
        params.logits[0, 0, 0] = np.array([0.3, -0.2])
        policy = GridPolicy(params)
        group = run_group(policy, task, 2, 1, 0.9, seed=2)
        _, adv = compute_group_advantages(group, w_phys=0.0)
        grad = logprob_grad(params, group, adv, 0.5, 0.0)
        # ratio is 1 (behavior == current), so each coordinate token k with
        # advantage A contributes A * (onehot(b) - softmax) / (G * n_tokens).
        expected = np.zeros_like(params.logits)
        z = params.logits[0, 0, 0]
        p = np.exp(z - z.max()); p = p / p.sum()
        for i, traj in enumerate(group.trajectories):
            tokens = traj.token_records()
            for k, tok in enumerate(tokens):
                if tok.meta is None or tok.meta["axis"] != "x":
                    continue
                onehot = np.zeros(2); onehot[tok.meta["bin"]] = 1.0
                expected[0, 0, 0] += (
                    adv.advantages[i][k] * (onehot - p) / (len(group.trajectories) * len(tokens))
                )
        assert np.allclose(grad[0, 0, 0], expected[0, 0, 0], rtol=1e-12, atol=1e-15)

    def test_objective_matches_surrogate_at_sampling_params(self, fixture_task):
        from spatialrl.advantage import surrogate_objective

        policy, group = sampled_policy_and_group(
            fixture_task, seed=4, behavior_shift=0.3, explore_eps=0.05
        )
        _, adv = compute_group_advantages(group, w_phys=0.2)
        expected, _ = surrogate_objective(group, adv, 0.2, 0.01)
        assert policy_objective(policy.params, group, adv, 0.2, 0.01) == pytest.approx(
            expected, abs=1e-12
        )

    def test_gradient_matches_finite_differences(self, fixture_task):
        policy, group = sampled_policy_and_group(
            fixture_task, group_size=3, turns=2, bins=5, seed=21,
            behavior_shift=0.3, explore_eps=0.05,
        )
        params = policy.params
        _, adv = compute_group_advantages(group, w_phys=0.2)
        grad = logprob_grad(params, group, adv, 0.2, 0.01)
        h = 1e-5
        it = np.nditer(grad, flags=["multi_index"])
        max_rel = 0.0
        while not it.finished:
            idx = it.multi_index
            plus, minus = params.copy(), params.copy()
            plus.logits[idx] += h
            minus.logits[idx] -= h
            fd = (
                policy_objective(plus, group, adv, 0.2, 0.01)
                - policy_objective(minus, group, adv, 0.2, 0.01)
            ) / (2 * h)
            denom = max(abs(fd), abs(grad[idx]), 1e-6)
            max_rel = max(max_rel, abs(grad[idx] - fd) / denom)
            it.iternext()
        assert max_rel <= 1e-4

    def test_foreign_token_metadata_is_rejected(self, fixture_task):
        group = sampled_group(fixture_task, seed=4, bins=6)
        params = GridPolicyParams.for_task(fixture_task, 2, 3)  # fewer bins than sampled
        _, adv = compute_group_advantages(group, w_phys=0.0)
        with pytest.raises(ValueError, match="shape|fit"):
            logprob_grad(params, group, adv, 0.2, 0.0)


class TestTrain:
    def test_zero_learning_rate_keeps_params(self, fixture_task):
        params, metrics = train(
            [fixture_task], steps=5, learning_rate=0.0, seed=3, bins=6, turns=2
        )
        assert np.all(params.logits == 0.0)
        assert len(metrics) == 5

    def test_steps_zero_yields_baseline_metrics_only(self, fixture_task):
        params, metrics = train(
            [fixture_task], steps=0, seed=3, bins=6, turns=2, baseline_groups=4
        )
        assert np.all(params.logits == 0.0)
        assert len(metrics) == 4

    def test_metrics_schema(self, fixture_task):
        _, metrics = train([fixture_task], steps=2, seed=3, bins=6, turns=2)
        doc = metrics[0].to_dict()
        assert set(doc) == {
            "step", "mean_total", "collision_ratio", "constraint_ratio", "format_acc",
        }
        assert metrics[0].format_acc == 1.0

    def test_reproducible_metric_stream(self, fixture_task):
        _, a = train([fixture_task], steps=4, seed=11, bins=6, turns=2)
        _, b = train([fixture_task], steps=4, seed=11, bins=6, turns=2)
        assert [m.to_dict() for m in a] == [m.to_dict() for m in b]

    def test_mismatched_inventories_are_rejected(self, fixture_task):
        with pytest.raises(ValueError, match="inventory"):
            train([fixture_task, tiny_task(2)], steps=1)

    def test_checkpoint_round_trip(self, fixture_task, tmp_path):
        params, _ = train([fixture_task], steps=2, seed=3, bins=6, turns=2)
        path = tmp_path / "params.json"
        params.save(path)
        loaded = GridPolicyParams.load(path)
        assert np.array_equal(loaded.logits, params.logits)
        assert loaded.object_ids == params.object_ids
        assert loaded.explore_eps == params.explore_eps
