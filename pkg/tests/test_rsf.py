import dataclasses

import numpy as np
import pytest

import vprkit as vk
from vprkit.errors import InvalidMultiplicity, ShapeError
from vprkit.rsf import _hard_negatives


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestTripletLoss:
    def test_hinge_boundary_is_zero(self):
        f_q = unit([1.0, 0.0])
        f_n = unit([np.cos(0.1), np.sin(0.1)])
        m = float(np.linalg.norm(f_q - f_n))
        loss, *_ = vk.triplet_loss(f_q, f_q, f_n, m)
        assert loss == 0.0

    def test_equal_positive_negative_gives_margin(self):
        f_q = unit([1.0, 1.0])
        f_pn = unit([0.0, 1.0])
        loss, *_ = vk.triplet_loss(f_q, f_pn, f_pn, 0.25)
        assert loss == pytest.approx(0.25, abs=1e-15)

    def test_one_dimensional_hand_case(self):
        loss, g_q, g_p, g_n = vk.triplet_loss(
            np.array([0.0]), np.array([2.0]), np.array([1.0]), 0.5
        )
        assert loss == pytest.approx(1.5)
        assert g_q[0] == pytest.approx(0.0)  # (0-2)/2 - (0-1)/1
        assert g_p[0] == pytest.approx(1.0)
        assert g_n[0] == pytest.approx(-1.0)

    def test_zero_branch_has_zero_gradients(self):
        loss, g_q, g_p, g_n = vk.triplet_loss(
            np.array([0.0]), np.array([0.1]), np.array([5.0]), 0.5
        )
        assert loss == 0.0
        assert not g_q.any() and not g_p.any() and not g_n.any()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            vk.triplet_loss(np.zeros(2), np.zeros(3), np.zeros(2), 0.1)

    def test_formula_oracle_thousand_triples(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = int(rng.integers(1, 8))
            f_q, f_p, f_n = rng.normal(size=(3, d))
            m = float(rng.uniform(0.01, 1.0))
            loss, *_ = vk.triplet_loss(f_q, f_p, f_n, m)
            direct = max(
                np.linalg.norm(f_q - f_p) - np.linalg.norm(f_q - f_n) + m, 0.0
            )
            assert abs(loss - direct) < 1e-12
            assert loss >= 0.0
            if np.linalg.norm(f_q - f_p) + m <= np.linalg.norm(f_q - f_n):
                assert loss == 0.0

    def test_full_composition_gradient_vs_finite_differences(self):
        # image -> head -> triplet loss, checked away from the hinge kink
        rng = np.random.default_rng(3)
        model = vk.init_model(hidden_dims=[5], output_dim=4, seed=2, input_dim=6)
        raws = rng.normal(size=(3, 6))
        margin = 0.5

        def objective():
            f_q = vk.forward(model, raws[0])
            f_p = vk.forward(model, raws[1])
            f_n = vk.forward(model, raws[2])
            return vk.triplet_loss(f_q, f_p, f_n, margin)[0]

        loss0 = objective()
        assert loss0 > 0.05
        f_q = vk.forward(model, raws[0])
        f_p = vk.forward(model, raws[1])
        f_n = vk.forward(model, raws[2])
        _, g_q, g_p, g_n = vk.triplet_loss(f_q, f_p, f_n, margin)
        total = vk.ParamGradients.zeros_like(model)
        total += vk.backward(model, raws[0], g_q)
        total += vk.backward(model, raws[1], g_p)
        total += vk.backward(model, raws[2], g_n)
        h = 1e-5
        worst = 0.0
        for k in range(len(model.weights)):
            for i in range(model.weights[k].shape[0]):
                for j in range(model.weights[k].shape[1]):
                    model.weights[k][i, j] += h
                    fp = objective()
                    model.weights[k][i, j] -= 2 * h
                    fm = objective()
                    model.weights[k][i, j] += h
                    num = (fp - fm) / (2 * h)
                    ana = total.weights[k][i, j]
                    worst = max(worst, abs(num - ana) / max(1e-8, abs(num), abs(ana)))
        assert worst < 1e-4


@pytest.fixture(scope="module")
def stream(tiny_world_module):
    spec = vk.AugmentationSpec.from_string("appearance")
    return vk.build_finetune_stream(tiny_world_module.reference_only(), 3, spec, seed=8)


@pytest.fixture(scope="module")
def tiny_world_module():
    return vk.generate_synthetic(
        vk.SynthWorldSpec(
            place_count=5,
            spacing=30.0,
            reference_style=vk.StyleParams(texture_family="blocks"),
            query_style=vk.StyleParams(texture_family="blocks"),
            queries_per_place=1,
            image_size=32,
            seed=4,
        )
    )


class TestFinetuneStream:
    def test_cardinality_per_epoch(self, stream):
        for multiplicity in (1, 2, 4):
            s = dataclasses.replace(stream, multiplicity=multiplicity)
            assert len(s.realize_epoch(0)) == multiplicity * len(s.references)

    def test_queries_inherit_source_pose(self, stream):
        for src, query in stream.realize_epoch(2):
            assert query.pose == stream.references[src].pose

    def test_epochs_differ_but_replay_is_identical(self, stream):
        e0a = stream.realize_epoch(0)
        e0b = stream.realize_epoch(0)
        e1 = stream.realize_epoch(1)
        for (_, qa), (_, qb) in zip(e0a, e0b):
            np.testing.assert_array_equal(qa.pixels, qb.pixels)
        assert any(
            not np.array_equal(qa.pixels, q1.pixels)
            for (_, qa), (_, q1) in zip(e0a, e1)
        )

    def test_invalid_multiplicity(self, tiny_world_module):
        with pytest.raises(InvalidMultiplicity):
            vk.build_finetune_stream(
                tiny_world_module, 0, vk.AugmentationSpec(), seed=1
            )


class TestMining:
    def test_hard_negative_prefers_feature_space_closest(self):
        # references at x = 0, 10, 40, 100; query pose x=0; radius 25
        # candidates are x=40 and x=100; feature distances 0.9 and 0.4
        q_desc = np.array([1.0, 0.0])
        ref_descs = np.array(
            [[1.0, 0.0], [0.9, 0.1], [0.6, 0.67], [0.92, 0.05]]
        )
        assert np.linalg.norm(ref_descs[2] - q_desc) > np.linalg.norm(
            ref_descs[3] - q_desc
        )
        candidates = np.array([2, 3])
        assert _hard_negatives(q_desc, ref_descs, candidates, 1) == [3]

    def test_mining_matches_brute_force_scan(self, tiny_world_module):
        model = vk.init_model(hidden_dims=[16], output_dim=8, seed=6)
        config = vk.TrainConfig(negative_radius=25.0, seed=3)
        stream = vk.build_finetune_stream(
            tiny_world_module.reference_only(), 2, vk.AugmentationSpec(), seed=3
        )
        triplets, skipped = vk.mine_triplets(model, stream, config, epoch=0)
        assert skipped == 0
        ref_descs = vk.forward_batch(
            model, np.stack([vk.extract_raw(r) for r in stream.references])
        )
        realized = stream.realize_epoch(0)
        assert len(triplets) == len(realized)
        for t, (src, query) in zip(triplets, realized):
            assert t.positive == src
            q_desc = vk.forward(model, vk.extract_raw(query))
            best = None
            for ri, rp in enumerate(stream.reference_poses):
                if query.pose.distance(rp) <= config.negative_radius:
                    continue
                d = float(np.linalg.norm(ref_descs[ri] - q_desc))
                if best is None or d < best[0]:
                    best = (d, ri)
            assert t.negative == best[1]

    def test_singleton_candidate_is_always_mined(self):
        rng = np.random.default_rng(9)
        refs = [
            vk.ImageRecord(f"r{i}", rng.random((16, 16, 3)), vk.Pose(i * 5.0, 0.0))
            for i in range(3)
        ]
        refs.append(vk.ImageRecord("r3", rng.random((16, 16, 3)), vk.Pose(500.0, 0.0)))
        ds = vk.Dataset(references=refs, reference_poses=[r.pose for r in refs])
        stream = vk.build_finetune_stream(ds, 1, vk.AugmentationSpec(), seed=0)
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        config = vk.TrainConfig(negative_radius=25.0)
        triplets, skipped = vk.mine_triplets(model, stream, config, epoch=0)
        # queries sourced from r0..r2 can only use r3; r3's query uses any of r0..r2
        for t in triplets:
            if t.source != 3:
                assert t.negative == 3

    def test_poseless_mode_reproducible_and_never_source(self, tiny_world_module):
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        config = vk.TrainConfig(poseless=True, seed=5)
        stream = vk.build_finetune_stream(
            tiny_world_module.reference_only(), 4, vk.AugmentationSpec(), seed=5
        )
        runs = []
        for _ in range(2):
            negs = []
            for epoch in range(10):
                triplets, _ = vk.mine_triplets(model, stream, config, epoch)
                for t in triplets:
                    assert t.negative != t.source
                    negs.append(t.negative)
            runs.append(negs)
        assert runs[0] == runs[1]

    def test_world_smaller_than_radius_skips_queries(self):
        rng = np.random.default_rng(2)
        refs = [
            vk.ImageRecord(f"r{i}", rng.random((16, 16, 3)), vk.Pose(i * 1.0, 0.0))
            for i in range(4)
        ]
        ds = vk.Dataset(references=refs, reference_poses=[r.pose for r in refs])
        stream = vk.build_finetune_stream(ds, 1, vk.AugmentationSpec(), seed=0)
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        triplets, skipped = vk.mine_triplets(
            model, stream, vk.TrainConfig(negative_radius=25.0), epoch=0
        )
        assert triplets == []
        assert skipped == 4


class TestTrain:
    def test_zero_epochs_is_identity(self, tiny_world_module):
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        stream = vk.build_finetune_stream(
            tiny_world_module.reference_only(), 1, vk.AugmentationSpec(), seed=0
        )
        out, log = vk.train(model, stream, vk.TrainConfig(epochs=0))
        assert out.fingerprint() == model.fingerprint()
        assert log.step_losses == []

    def test_log_structure(self, tiny_world_module):
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        stream = vk.build_finetune_stream(
            tiny_world_module.reference_only(), 2, vk.AugmentationSpec(), seed=0
        )
        config = vk.TrainConfig(epochs=3, batch_size=4, early_stop_patience=99)
        _, log = vk.train(model, stream, config, validation=tiny_world_module)
        n_triplets = 2 * len(stream.references)
        steps_per_epoch = -(-n_triplets // 4)
        assert len(log.step_losses) == 3 * steps_per_epoch
        assert len(log.epoch_val_recall1) == 3
        assert len(log.epoch_mean_loss) == 3
        assert len(log.epoch_seconds) == 3
        assert log.mode == "pose"

    def test_descent_on_fixed_mined_set(self, tiny_world_module):
        model = vk.init_model(seed=1)
        stream = vk.build_finetune_stream(
            tiny_world_module.reference_only(),
            3,
            vk.AugmentationSpec.from_string("appearance"),
            seed=0,
        )
        config = vk.TrainConfig(
            epochs=6, learning_rate=1e-2, margin=0.4, batch_size=8,
            early_stop_patience=99,
        )
        _, log = vk.train(model, stream, config)
        assert log.epoch_mean_loss[-1] < log.epoch_mean_loss[0]

    def test_determinism_bit_identical_parameters(self, tiny_world_module):
        config = vk.TrainConfig(epochs=2, learning_rate=1e-2, margin=0.4, seed=7)
        spec = vk.AugmentationSpec.from_string("appearance,viewpoint")
        outs = []
        for _ in range(2):
            model = vk.init_model(seed=1)
            out, _ = vk.rsf_finetune(model, tiny_world_module, config, spec)
            outs.append(out)
        assert outs[0].fingerprint() == outs[1].fingerprint()


class CountingList(list):
    def __init__(self, items):
        super().__init__(items)
        self.accesses = 0

    def __getitem__(self, idx):
        self.accesses += 1
        return super().__getitem__(idx)

    def __iter__(self):
        self.accesses += 1
        return super().__iter__()


class TestHygiene:
    def test_rsf_never_reads_test_queries(self, tiny_world_module):
        counting = CountingList(tiny_world_module.queries)
        ds = vk.Dataset(
            references=tiny_world_module.references,
            reference_poses=tiny_world_module.reference_poses,
            queries=counting,
            query_poses=tiny_world_module.query_poses,
        )
        model = vk.init_model(hidden_dims=[8], output_dim=4, seed=1)
        config = vk.TrainConfig(epochs=2, seed=0)
        spec = vk.AugmentationSpec.from_string("appearance")
        vk.rsf_finetune(model, ds, config, spec)
        assert counting.accesses == 0
