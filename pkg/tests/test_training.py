import numpy as np
import pytest

from graphscene import autodiff as ad
from graphscene.autodiff import Tensor
from graphscene.geometry import OrientedBox
from graphscene.model import (
    HyperParams,
    LayoutPrediction,
    ModelParams,
    Scene,
    SceneObject,
)
from graphscene.scenegraph import EdgeTriplet, ObjectNode, SceneGraph, Vocabulary
from graphscene.synthdata import SynthConfig, default_vocabulary, synth_scene
from graphscene.training import (
    LossBreakdown,
    TrainConfig,
    TrainingDiverged,
    compute_losses,
    draw_noise,
    loss_adversarial_box,
    loss_adversarial_shape,
    loss_kl,
    loss_reconstruction,
    prepare_batch,
    train,
    train_step,
)

TINY_VOCAB = Vocabulary(("floor", "table", "chair", "lamp"),
                        ("left of", "right of", "standing on"))
TINY_HP = HyperParams(num_categories=4, num_predicates=3, feature_width=8,
                      latent_width=4, code_width=16, disc_hidden=8)


def tiny_scene(seed=0, n_nodes=4):
    rng = np.random.default_rng(seed)
    nodes = tuple(ObjectNode(i, int(rng.integers(4))) for i in range(n_nodes))
    edges = []
    for i in range(1, n_nodes):
        edges.append(EdgeTriplet(i, int(rng.integers(i)), int(rng.integers(3))))
    g = SceneGraph(nodes=nodes, edges=tuple(edges))
    objects = [
        SceneObject(node_id=n.id, category_id=n.category_id,
                    box=OrientedBox(*rng.uniform(0.2, 1.0, 3), *rng.uniform(-1, 1, 3),
                                    alpha=rng.uniform(0, 360)),
                    code=rng.normal(size=TINY_HP.code_width))
        for n in nodes
    ]
    return g, Scene(objects=objects)


class TestLossKl:
    def test_prior_equals_posterior(self):
        z = Tensor(np.zeros((3, 4)))
        assert loss_kl(z, Tensor(np.zeros((3, 4)))).item() == 0.0

    def test_unit_mean_one_dim(self):
        assert loss_kl(Tensor(np.array([[1.0]])), Tensor(np.array([[0.0]]))).item() \
            == pytest.approx(0.5)

    def test_matches_numerical_integration(self):
        # KL(N(0, 4) || N(0, 1)) via direct quadrature of the integrand;
        # log(p/q) expanded analytically to avoid overflow in the tails
        x = np.linspace(-40, 40, 400_001)
        var = 4.0
        p = np.exp(-x * x / (2 * var)) / np.sqrt(2 * np.pi * var)
        log_ratio = x * x / 2.0 - x * x / (2 * var) - 0.5 * np.log(var)
        oracle = np.trapezoid(p * log_ratio, x)
        ours = loss_kl(Tensor(np.array([[0.0]])), Tensor(np.array([[np.log(4.0)]]))).item()
        assert ours == pytest.approx(oracle, abs=1e-6)
        assert ours == pytest.approx(0.8069, abs=1e-4)

    def test_mean_over_nodes(self):
        mu = Tensor(np.array([[1.0], [0.0]]))
        lv = Tensor(np.zeros((2, 1)))
        assert loss_kl(mu, lv).item() == pytest.approx(0.25)


class TestLossReconstruction:
    def make_pred(self, box6, logits, codes):
        return LayoutPrediction(box6=Tensor(box6), angle_logits=Tensor(logits)), Tensor(codes)

    def test_perfect_prediction_is_zero(self):
        box6 = np.random.default_rng(0).uniform(0.1, 1, size=(3, 6))
        codes = np.random.default_rng(1).normal(size=(3, 16))
        bins = np.array([2, 5, 7])
        logits = np.full((3, 24), -20.0)
        logits[np.arange(3), bins] = 20.0
        pred, pc = self.make_pred(box6, logits, codes)
        box, angle, shape = loss_reconstruction(pred, pc, box6, bins, codes, np.arange(3))
        assert box.item() == 0.0
        assert shape.item() == 0.0
        assert angle.item() == pytest.approx(0.0, abs=1e-6)

    def test_box_offset_hand_value(self):
        target = np.zeros((2, 6))
        box6 = np.full((2, 6), 0.1)
        bins = np.zeros(2, dtype=np.int64)
        logits = np.zeros((2, 24))
        logits[:, 0] = 30.0
        pred, pc = self.make_pred(box6, logits, np.zeros((2, 16)))
        box, _angle, _shape = loss_reconstruction(pred, pc, target, bins,
                                                  np.zeros((2, 16)), np.arange(2))
        assert box.item() == pytest.approx(0.6)

    def test_mask_excludes_bad_rows(self):
        target = np.zeros((2, 6))
        box6 = np.stack([np.zeros(6), np.full(6, 99.0)])
        bins = np.zeros(2, dtype=np.int64)
        logits = np.zeros((2, 24))
        logits[:, 0] = 30.0
        pred, pc = self.make_pred(box6, logits, np.zeros((2, 16)))
        box, _a, _s = loss_reconstruction(pred, pc, target[:1], bins[:1],
                                          np.zeros((1, 16)), np.array([0]))
        assert box.item() == 0.0

    def test_empty_mask_contributes_zero(self):
        pred, pc = self.make_pred(np.ones((2, 6)), np.ones((2, 24)), np.ones((2, 16)))
        box, angle, shape = loss_reconstruction(pred, pc, np.zeros((0, 6)),
                                                np.zeros(0, dtype=np.int64),
                                                np.zeros((0, 16)), np.array([], dtype=np.int64))
        assert box.item() == angle.item() == shape.item() == 0.0


@pytest.fixture
def tiny_params():
    return ModelParams(TINY_HP, seed=0)


def zero_final_layers(params):
    """Force both discriminators to output probability 0.5 everywhere."""
    for name in ("d_box.l3.w", "d_box.l3.b", "d_shape.headD.w", "d_shape.headD.b"):
        params.disc[name].values[:] = 0.0


class TestAdversarialLosses:
    def test_d_at_half_hand_value(self, tiny_params):
        zero_final_layers(tiny_params)
        rng = np.random.default_rng(0)
        k = 3
        tup = (rng.integers(0, 4, k), rng.integers(0, 4, k), rng.integers(0, 3, k),
               rng.normal(size=(k, 7)), rng.normal(size=(k, 7)))
        g_loss, d_loss = loss_adversarial_box(tiny_params, tup, tup)
        assert d_loss.item() == pytest.approx(k * 2 * np.log(2), rel=1e-9)
        assert g_loss.item() == pytest.approx(k * np.log(2), rel=1e-9)

    def test_shape_aux_uniform_head(self, tiny_params):
        zero_final_layers(tiny_params)
        tiny_params.disc["d_shape.headC.w"].values[:] = 0.0
        tiny_params.disc["d_shape.headC.b"].values[:] = 0.0
        rng = np.random.default_rng(1)
        codes = rng.normal(size=(4, TINY_HP.code_width))
        cats = rng.integers(0, 4, 4)
        g_loss, d_loss, aux = loss_adversarial_shape(tiny_params, codes, cats, codes, cats)
        assert aux.item() == pytest.approx(np.log(4))
        # GAN part matches the box case, plus one aux term on each side
        assert g_loss.item() == pytest.approx(4 * np.log(2) + np.log(4), rel=1e-9)
        assert d_loss.item() == pytest.approx(4 * 2 * np.log(2) + 2 * np.log(4), rel=1e-9)

    def test_d_loss_does_not_reach_generator(self, tiny_params):
        rng = np.random.default_rng(2)
        fake_codes = ad.matmul(Tensor(rng.normal(size=(3, 5)), requires_grad=True),
                               Tensor(rng.normal(size=(5, TINY_HP.code_width))))
        cats = rng.integers(0, 4, 3)
        _g, d_loss, _aux = loss_adversarial_shape(
            tiny_params, rng.normal(size=(3, TINY_HP.code_width)), cats, fake_codes, cats)
        d_loss.backward()
        assert fake_codes.grad is None
        assert tiny_params.disc["d_shape.l1.w"].grad is not None
        tiny_params.disc.zero_grad()

    def test_g_loss_reaches_generator(self, tiny_params):
        rng = np.random.default_rng(3)
        src = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        fake_codes = ad.matmul(src, Tensor(rng.normal(size=(5, TINY_HP.code_width))))
        cats = rng.integers(0, 4, 3)
        g_loss, _d, _aux = loss_adversarial_shape(
            tiny_params, rng.normal(size=(3, TINY_HP.code_width)), cats, fake_codes, cats)
        g_loss.backward()
        assert src.grad is not None and np.any(src.grad != 0)
        tiny_params.disc.zero_grad()


def make_batch(params, cfg, samples, seed):
    rng = np.random.default_rng(seed)
    batch = prepare_batch(samples, cfg, TINY_VOCAB, rng, angle_bins=params.hp.angle_bins)
    draw_noise(batch, params.hp.latent_width, rng)
    return batch


class TestComputeLosses:
    def test_mode_none_is_pure_vae(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(1.0, 0.0, 0.0), batch_size=2, epochs=1)
        samples = [tiny_scene(0), tiny_scene(1)]
        batch = make_batch(tiny_params, cfg, samples, seed=0)
        total, d_total, breakdown = compute_losses(tiny_params, batch, cfg)
        assert d_total is None
        assert breakdown.d_box_g == breakdown.d_shape_g == 0.0
        expected = (breakdown.recon_box + breakdown.recon_angle + breakdown.recon_shape
                    + cfg.kl_weight * breakdown.kl)
        assert breakdown.total == pytest.approx(expected, rel=1e-12)

    def test_total_weighting_invariant(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(0.0, 0.5, 0.5), batch_size=2, epochs=1)
        samples = [tiny_scene(2), tiny_scene(3)]
        batch = make_batch(tiny_params, cfg, samples, seed=1)
        _total, d_total, b = compute_losses(tiny_params, batch, cfg)
        assert d_total is not None
        expected = (b.recon_box + b.recon_angle + b.recon_shape + cfg.kl_weight * b.kl
                    + cfg.box_gan_weight * b.d_box_g + cfg.shape_gan_weight * b.d_shape_g)
        assert b.total == pytest.approx(expected, rel=1e-9)

    def test_loss_invariant_to_node_order(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(1.0, 0.0, 0.0), batch_size=1, epochs=1)
        g, scene = tiny_scene(4)
        perm = [2, 0, 3, 1]
        g_p = SceneGraph(nodes=tuple(g.nodes[i] for i in perm), edges=g.edges)
        scene_p = Scene(objects=[scene.objects[i] for i in perm])

        batch = make_batch(tiny_params, cfg, [(g, scene)], seed=2)
        batch_p = make_batch(tiny_params, cfg, [(g_p, scene_p)], seed=2)
        batch_p.eps = batch.eps[perm]
        t1, _, _ = compute_losses(tiny_params, batch, cfg)
        t2, _, _ = compute_losses(tiny_params, batch_p, cfg)
        assert t1.item() == pytest.approx(t2.item(), abs=1e-8)


class TestTrainStep:
    def test_generator_step_leaves_discriminator(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(1.0, 0.0, 0.0), batch_size=2, epochs=1)
        before = {n: tiny_params.disc[n].values.copy() for n in tiny_params.disc.names()}
        rng = np.random.default_rng(0)
        train_step(tiny_params, [tiny_scene(0), tiny_scene(1)], cfg, TINY_VOCAB, rng)
        for n, v in before.items():
            np.testing.assert_array_equal(tiny_params.disc[n].values, v)

    def test_zero_gan_weights_freeze_discriminator(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(0.0, 0.5, 0.5), batch_size=2, epochs=1,
                          box_gan_weight=0.0, shape_gan_weight=0.0)
        before = {n: tiny_params.disc[n].values.copy() for n in tiny_params.disc.names()}
        rng = np.random.default_rng(1)
        train_step(tiny_params, [tiny_scene(2), tiny_scene(3)], cfg, TINY_VOCAB, rng)
        for n, v in before.items():
            np.testing.assert_array_equal(tiny_params.disc[n].values, v)

    def test_manipulation_step_updates_discriminator(self, tiny_params):
        cfg = TrainConfig(manipulation_mix=(0.0, 0.5, 0.5), batch_size=2, epochs=1)
        before = {n: tiny_params.disc[n].values.copy() for n in tiny_params.disc.names()}
        rng = np.random.default_rng(2)
        train_step(tiny_params, [tiny_scene(4), tiny_scene(5)], cfg, TINY_VOCAB, rng)
        changed = any(not np.array_equal(tiny_params.disc[n].values, v)
                      for n, v in before.items())
        assert changed


class TestTrain:
    def test_deterministic_across_runs(self):
        samples = [tiny_scene(s) for s in range(8)]
        cfg = TrainConfig(epochs=2, batch_size=4, seed=7)

        def run():
            params = ModelParams(TINY_HP, seed=3)
            train(params, samples, cfg, TINY_VOCAB)
            return {n: params.gen[n].values.copy() for n in params.gen.names()}

        a, b = run(), run()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_history_and_log(self, tmp_path):
        samples = [tiny_scene(s) for s in range(4)]
        cfg = TrainConfig(epochs=3, batch_size=4, seed=0)
        params = ModelParams(TINY_HP, seed=0)
        log = tmp_path / "log.jsonl"
        history = train(params, samples, cfg, TINY_VOCAB, log_path=log)
        assert len(history) == 3
        lines = log.read_text().strip().splitlines()
        assert len(lines) == 3
        import json
        rec = json.loads(lines[0])
        assert rec["epoch"] == 0 and "total" in rec

    def test_divergence_aborts_with_location(self):
        samples = [tiny_scene(s) for s in range(4)]
        cfg = TrainConfig(epochs=1, batch_size=4, seed=0)
        params = ModelParams(TINY_HP, seed=0)
        params.gen["posterior.1.w"].values[:] = np.nan
        with pytest.raises(TrainingDiverged, match="epoch 0"):
            train(params, samples, cfg, TINY_VOCAB)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(ModelParams(TINY_HP), [], TrainConfig(epochs=1), TINY_VOCAB)

    @pytest.mark.slow
    def test_reconstruction_decreases(self):
        # median first-vs-tenth-epoch reconstruction over 3 seeds on 50 scenes
        hp = HyperParams(num_categories=12, num_predicates=10, feature_width=32,
                         latent_width=16, code_width=128, disc_hidden=32)
        vocab = default_vocabulary()
        scfg = SynthConfig(num_scenes=1, seed=0, max_objects=6)
        data_rng = np.random.default_rng(0)
        samples = [synth_scene(scfg, data_rng) for _ in range(50)]
        drops = []
        for seed in range(3):
            params = ModelParams(hp, seed=seed)
            cfg = TrainConfig(epochs=10, batch_size=8, seed=seed)
            history = train(params, samples, cfg, vocab)
            recon = [h.recon_box + h.recon_angle + h.recon_shape for h in history]
            drops.append(recon[-1] - recon[0])
            assert np.isfinite(recon).all()
        assert np.median(drops) < 0.0


class TestFullLossGradient:
    def test_sampled_finite_differences(self, tiny_params):
        # manipulation modes active so the check covers T and both critics
        cfg = TrainConfig(manipulation_mix=(0.0, 0.5, 0.5), batch_size=2, epochs=1)
        samples = [tiny_scene(0), tiny_scene(1)]
        batch = make_batch(tiny_params, cfg, samples, seed=5)
        assert batch.mask.any()

        def loss_fn():
            return compute_losses(tiny_params, batch, cfg, train_bn=False)[0]

        loss_fn().backward()
        tiny_params.gen.ensure_grads()
        tiny_params.disc.ensure_grads()
        stores = {**tiny_params.gen.params, **tiny_params.disc.params}
        analytic = {n: p.grad.copy() for n, p in stores.items()}
        tiny_params.gen.zero_grad()
        tiny_params.disc.zero_grad()

        rng = np.random.default_rng(6)
        eps = 1e-5
        worst = 0.0
        for name, p in stores.items():
            flat = p.values.reshape(-1)
            for i in rng.choice(flat.size, size=min(2, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + eps
                hi = loss_fn().item()
                flat[i] = orig - eps
                lo = loss_fn().item()
                flat[i] = orig
                numeric = (hi - lo) / (2 * eps)
                a = analytic[name].reshape(-1)[i]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
        assert worst < 1e-4
