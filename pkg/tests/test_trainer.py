import pytest
import torch
import torch.nn.functional as F

from vsrlab.disc import DiscriminatorSpec
from vsrlab.errors import ConfigError, ShapeError
from vsrlab.gen import GeneratorSpec
from vsrlab.loss import LossConfig
from vsrlab.trainer import (
    GradientPool,
    OptimizerState,
    TrainConfig,
    TrainState,
    accumulate_gradients,
    apply_pooled_update,
    clip_gradients,
    leaf_step,
    load_train_state,
    optimizer_update,
    process_crop,
    save_train_state,
    train_epoch,
    train_step_2x,
    train_step_4x,
)

from conftest import constant_sequence

TINY_GEN = GeneratorSpec("residual_based", 8, 1, (1,), "dot_product")
TINY_DISC = DiscriminatorSpec(base_channels=8, depth=2)


def tiny_config(**overrides) -> TrainConfig:
    defaults = dict(crop_size=64, seq_len=2, seed=0, learning_rate=1e-3)
    defaults.update(overrides)
    return TrainConfig(**defaults)


def tiny_loss(**weights) -> LossConfig:
    if not weights:
        weights = {"mse": 1.0, "sobel": 0.1}
    return LossConfig(weights=dict(weights))


def make_state(config=None, loss_config=None) -> TrainState:
    return TrainState.create(
        TINY_GEN, TINY_DISC, config or tiny_config(), loss_config or tiny_loss()
    )


class TestGradientPool:
    def test_mean_of_identical_is_identity(self):
        params = [torch.zeros(3)]
        pool = GradientPool(params)
        g = [torch.tensor([1.0, 2.0, 3.0])]
        for _ in range(4):
            accumulate_gradients(pool, g)
        assert torch.equal(pool.mean()[0], g[0])

    def test_running_mean(self):
        pool = GradientPool([torch.zeros(1)])
        for v in (1.0, 2.0, 3.0):
            pool.add([torch.tensor([v])])
        assert pool.mean()[0].item() == pytest.approx(2.0)

    def test_shape_mismatch(self):
        pool = GradientPool([torch.zeros(3)])
        with pytest.raises(ShapeError):
            pool.add([torch.zeros(4)])

    def test_empty_pool_rejected(self):
        pool = GradientPool([torch.zeros(2)])
        with pytest.raises(ConfigError):
            pool.mean()

    def test_clear(self):
        pool = GradientPool([torch.zeros(2)])
        pool.add([torch.ones(2)])
        pool.clear()
        assert pool.count == 0


class TestClip:
    def test_scales_down_to_clip_norm(self):
        grads = [torch.full((4,), 5.0)]  # norm 10
        clipped = clip_gradients(grads, 1.0)
        norm = torch.sqrt(sum((g**2).sum() for g in clipped)).item()
        assert norm == pytest.approx(1.0, abs=1e-6)

    def test_small_norm_unchanged(self):
        grads = [torch.full((4,), 0.25)]  # norm 0.5
        clipped = clip_gradients(grads, 1.0)
        assert torch.equal(clipped[0], grads[0])

    def test_zero_gradient_unchanged(self):
        grads = [torch.zeros(4)]
        assert torch.equal(clip_gradients(grads, 1.0)[0], grads[0])

    def test_global_norm_across_tensors(self):
        grads = [torch.full((4,), 3.0), torch.full((4,), 4.0)]  # norm 10
        clipped = clip_gradients(grads, 2.0)
        norm = torch.sqrt(sum((g**2).sum() for g in clipped)).item()
        assert norm == pytest.approx(2.0, abs=1e-6)


class TestOptimizer:
    def test_sgd_update(self):
        theta = [torch.tensor([1.0])]
        opt = OptimizerState(kind="sgd", lr=0.1)
        optimizer_update(theta, [torch.tensor([0.5])], opt)
        assert theta[0].item() == pytest.approx(0.95)

    def test_sgd_zero_gradient(self):
        theta = [torch.tensor([1.0])]
        optimizer_update(theta, [torch.zeros(1)], OptimizerState(kind="sgd", lr=0.1))
        assert theta[0].item() == 1.0

    def test_deterministic(self):
        def run():
            theta = [torch.tensor([1.0, -2.0])]
            opt = OptimizerState.create(theta, tiny_config(optimizer="adam"))
            for _ in range(3):
                optimizer_update(theta, [torch.tensor([0.3, -0.7])], opt)
            return theta[0]

        assert torch.equal(run(), run())

    def test_accumulated_mean_equals_update_on_mean_loss(self):
        # ten-parameter toy model, three quadratic losses
        torch.manual_seed(0)
        theta0 = torch.randn(10, dtype=torch.float64)
        targets = [torch.randn(10, dtype=torch.float64) for _ in range(3)]

        def loss_m(theta, m):
            return ((theta - targets[m]) ** 2).sum()

        # route A: accumulate per-loss gradients into the pool mean
        theta_a = theta0.clone().requires_grad_(True)
        pool = GradientPool([theta_a])
        for m in range(3):
            (g,) = torch.autograd.grad(loss_m(theta_a, m), [theta_a])
            pool.add([g])
        params_a = [theta_a.detach().clone()]
        optimizer_update(params_a, pool.mean(), OptimizerState(kind="sgd", lr=0.05))

        # route B: one gradient of the mean loss
        theta_b = theta0.clone().requires_grad_(True)
        mean_loss = sum(loss_m(theta_b, m) for m in range(3)) / 3.0
        (g_mean,) = torch.autograd.grad(mean_loss, [theta_b])
        params_b = [theta_b.detach().clone()]
        optimizer_update(params_b, [g_mean], OptimizerState(kind="sgd", lr=0.05))

        assert (params_a[0] - params_b[0]).abs().max().item() <= 1e-6


class TestStepBookkeeping:
    def test_2x_grid_on_128_crop(self, seq128):
        state = make_state(tiny_config(crop_size=128))
        before = state.counters["gen_calls"]
        train_step_2x(seq128, state, state.config)
        assert state.counters["gen_calls"] - before == 16
        assert state.counters["patch_losses"] == 16

    def test_4x_cascade_on_128_crop(self, seq128):
        state = make_state(tiny_config(crop_size=128))
        before = state.counters["gen_calls"]
        train_step_4x(seq128, state, state.config)
        assert state.counters["gen_calls"] - before == 8  # 4 patches x 2 passes

    def test_leaf_pass_counts(self, seq128):
        state = make_state(tiny_config(crop_size=128))
        before = state.counters["gen_calls"]
        leaf_step(seq128, state, state.config)
        assert state.counters["gen_calls"] - before == 4  # 2x2 grid of 32px patches

    def test_4x_intermediate_shapes(self, seq128):
        state = make_state(tiny_config(crop_size=128))
        sizes = []
        hook = state.generator.register_forward_hook(
            lambda m, i, o: sizes.append((i[0].shape[-1], o.shape[-1]))
        )
        train_step_4x(seq128, state, state.config)
        hook.remove()
        assert sizes == [(16, 32), (32, 64)] * 4  # each patch cascades 16 -> 32 -> 64

    def test_full_schedule_accumulation_count(self, seq128):
        config = tiny_config(crop_size=128)
        loss_config = LossConfig(weights={"mse": 1.0, "ssim": 0.1, "perceptual": 0.0})
        state = TrainState.create(TINY_GEN, TINY_DISC, config, loss_config)
        counts = []
        train_step_2x(seq128, state, config)
        counts.append(state.gen_pool.count)  # 16 patches + 1 whole-image
        leaf_step(seq128, state, config)
        counts.append(state.gen_pool.count)  # + 4 + 1
        train_step_4x(seq128, state, config)
        counts.append(state.gen_pool.count)  # + 4 + 1
        assert counts == [17, 22, 27]
        assert state.counters["patch_losses"] == 24

    def test_leaf_disabled(self, seq64):
        config = tiny_config(leaf_scale_steps=1)
        state = make_state(config)
        process_crop(seq64, state, config)
        # 2x pass (4 patches) + 4x pass (1 patch), no leaf pass
        assert state.counters["patch_losses"] == 5

    def test_reassembled_shapes_via_identity_oracle(self, seq128):
        """A generator stub that upsamples exactly drives every loss to its floor."""

        class NearestUp(torch.nn.Module):
            def __init__(self):
                super().__init__()
                self.dummy = torch.nn.Parameter(torch.zeros(1))

            def forward(self, x):
                return F.interpolate(x, scale_factor=2, mode="nearest")

        config = tiny_config(crop_size=128)
        loss_config = LossConfig(weights={"mse": 1.0, "charbonnier": 1.0, "gradient": 1.0})
        state = TrainState.create(TINY_GEN, TINY_DISC, config, loss_config)
        state.generator = NearestUp()
        state.gen_params = list(state.generator.parameters())
        state.gen_pool = GradientPool(state.gen_params)
        state.gen_opt = OptimizerState.create(state.gen_params, config)
        hr = constant_sequence(0.5, n=2, h=128, w=128)
        bundle = train_step_2x(hr, state, config)
        assert bundle.terms["mse"] == pytest.approx(0.0, abs=1e-12)
        assert bundle.terms["gradient"] == pytest.approx(0.0, abs=1e-12)
        assert bundle.terms["charbonnier"] == pytest.approx(1e-3, abs=1e-8)
        assert bundle.total == pytest.approx(1e-3, abs=1e-7)


class TestPoolSeparation:
    def test_updates_touch_disjoint_parameter_sets(self, seq64):
        loss_config = LossConfig(weights={"mse": 1.0, "adversarial": 0.01})
        state = TrainState.create(TINY_GEN, TINY_DISC, tiny_config(), loss_config)
        gen_before = [p.detach().clone() for p in state.gen_params]
        disc_before = [p.detach().clone() for p in state.disc_params]
        train_step_2x(seq64, state, state.config)
        assert state.gen_pool.count > 0 and state.disc_pool.count > 0
        apply_pooled_update(state, "generator")
        disc_after_gen = [p.detach().clone() for p in state.disc_params]
        for before, after in zip(disc_before, disc_after_gen):
            assert torch.equal(before, after)
        gen_after_gen = [p.detach().clone() for p in state.gen_params]
        assert any(not torch.equal(a, b) for a, b in zip(gen_before, gen_after_gen))
        apply_pooled_update(state, "discriminator")
        for a, b in zip(gen_after_gen, state.gen_params):
            assert torch.equal(a, b)
        assert any(not torch.equal(a, b) for a, b in zip(disc_before, state.disc_params))

    def test_one_update_per_network_per_image(self, seq64):
        loss_config = LossConfig(weights={"mse": 1.0, "adversarial": 0.01})
        state = TrainState.create(TINY_GEN, TINY_DISC, tiny_config(), loss_config)
        for _ in range(3):
            process_crop(seq64, state, state.config)
        assert state.counters["gen_updates"] == 3
        assert state.counters["disc_updates"] == 3
        assert state.gen_pool.count == 0 and state.disc_pool.count == 0

    def test_post_clip_norm_bounded(self, seq64):
        state = make_state(tiny_config(clip_norm=1e-4, learning_rate=1.0, optimizer="sgd"))
        gen_before = [p.detach().clone() for p in state.gen_params]
        process_crop(seq64, state, state.config)
        # sgd step of lr * clipped-grad: total parameter movement <= lr * clip_norm
        moved = torch.sqrt(
            sum(((a - b) ** 2).sum() for a, b in zip(gen_before, state.gen_params))
        ).item()
        assert moved <= 1e-4 + 1e-6


class TestPatchOrdering:
    def test_patch_values_independent_of_order(self, seq64):
        seq_state = make_state(tiny_config(patch_order="sequential"))
        rand_state = make_state(tiny_config(patch_order="random"))
        rand_state.generator.load_state_dict(seq_state.generator.state_dict())
        a = train_step_2x(seq64, seq_state, seq_state.config)
        b = train_step_2x(seq64, rand_state, rand_state.config)
        assert a.terms["mse"] == pytest.approx(b.terms["mse"], rel=1e-6)

    def test_stride_reduces_patch_count(self, seq128):
        state = make_state(tiny_config(crop_size=128, patch_stride=2))
        train_step_2x(seq128, state, state.config)
        assert state.counters["patch_losses"] == 8


class TestTrainEpoch:
    def test_epoch_runs_and_counts(self, seq64):
        state = make_state()
        summary = train_epoch([("clip0", seq64)], state, state.config, epoch=0)
        assert summary.crops_used == 1
        assert state.counters["gen_updates"] == 1
        assert summary.mean_bundle is not None
        assert summary.mean_bundle.total > 0

    def test_all_dark_dataset_zero_updates(self, caplog):
        dark = constant_sequence(0.0, n=2, h=64, w=64)
        state = make_state()
        summary = train_epoch([("dark", dark)], state, state.config, epoch=0)
        assert summary.crops_used == 0
        assert summary.crops_skipped_dark == 1
        assert state.counters["gen_updates"] == 0
        assert "no usable crops" in caplog.text

    def test_empty_dataset_rejected(self):
        state = make_state()
        with pytest.raises(ConfigError):
            train_epoch([], state, state.config)

    def test_fixed_seed_bit_identical_trajectory(self, seq64):
        def run():
            state = make_state()
            totals = []
            for epoch in range(2):
                summary = train_epoch([("c", seq64)], state, state.config, epoch=epoch)
                totals.append(summary.mean_bundle.total)
            weights = [p.detach().clone() for p in state.gen_params]
            return totals, weights

        totals_a, weights_a = run()
        totals_b, weights_b = run()
        assert totals_a == totals_b
        for a, b in zip(weights_a, weights_b):
            assert torch.equal(a, b)

    def test_degradation_log_captured(self, seq64):
        from vsrlab.degrade import default_plan

        state = make_state()
        log = {}
        train_epoch(
            [("c", seq64)], state, state.config, plan=default_plan(1), epoch=0, degradation_log=log
        )
        assert "c" in log and len(log["c"]) == 4


class TestStatePersistence:
    def test_round_trip_bit_exact(self, tmp_path, seq64):
        state = make_state()
        train_epoch([("c", seq64)], state, state.config, epoch=0)
        path = tmp_path / "state.ckpt"
        save_train_state(state, path)
        loaded = load_train_state(path)
        for a, b in zip(state.gen_params, loaded.gen_params):
            assert torch.equal(a, b)
        for a, b in zip(state.disc_params, loaded.disc_params):
            assert torch.equal(a, b)
        assert loaded.counters == state.counters
        assert loaded.gen_opt.step == state.gen_opt.step

    def test_resumed_training_continues_counters(self, tmp_path, seq64):
        state = make_state()
        train_epoch([("c", seq64)], state, state.config, epoch=0)
        save_train_state(state, tmp_path / "s.ckpt")
        loaded = load_train_state(tmp_path / "s.ckpt")
        train_epoch([("c", seq64)], loaded, loaded.config, epoch=1)
        assert loaded.counters["gen_updates"] == 2
        assert loaded.counters["epochs_done"] == 2


class TestConfigValidation:
    def test_crop_divisibility(self):
        with pytest.raises(ConfigError):
            TrainConfig(crop_size=100)

    def test_positive_rates(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(clip_norm=-1.0)

    def test_bad_optimizer(self):
        with pytest.raises(ConfigError):
            TrainConfig(optimizer="rmsprop")
