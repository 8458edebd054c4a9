import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cluster_scene, random_box
from lidarmix.adversarial import (
    EmptyBoxList,
    GradientField,
    OneSidedEmpty,
    PerturbationConfig,
    adversarial_perturb,
    adversarial_perturb_detailed,
    advmix_sample,
    batch_consistency,
    consistency_loss,
    perturbation_delta,
    point_mixup,
    surrogate_loss,
)
from lidarmix.geometry import Box3D, DomainTag, Scene, points_in_box
from lidarmix.gradcheck import gradient_relative_error, make_gradcheck_fixture


class SurrogateProvider:
    def __init__(self, knee=1.0):
        self.knee = knee

    def loss_and_gradient(self, scene, boxes):
        return surrogate_loss(scene, boxes, self.knee)


class TestSurrogateLoss:
    def test_requires_boxes(self):
        with pytest.raises(EmptyBoxList):
            surrogate_loss(Scene.empty(), [])

    def test_symmetric_points_zero_loss(self):
        box = Box3D(5.0, 0.0, 0.0, w=2, l=2, h=2, yaw=0.3)
        offsets = np.array([[0.4, 0.1, -0.2], [-0.4, -0.1, 0.2]])
        world = box.center() + offsets @ box.rotation().T
        scene = Scene(np.column_stack([world, np.zeros(2)]))
        loss, field = surrogate_loss(scene, [box])
        assert loss == 0.0
        assert np.all(field.grads == 0.0)

    def test_single_point_below_knee(self):
        # centroid at offset d along the heading axis: loss d^2/2,
        # gradient magnitude d, aligned with the heading direction
        d = 0.4
        box = Box3D(3.0, -2.0, 1.0, w=2, l=2, h=2, yaw=0.7)
        world = box.center() + np.array([d, 0.0, 0.0]) @ box.rotation().T
        scene = Scene(np.array([[*world, 0.0]]))
        loss, field = surrogate_loss(scene, [box])
        assert loss == pytest.approx(d * d / 2, abs=1e-12)
        grad = field.grads[0]
        assert np.linalg.norm(grad) == pytest.approx(d, abs=1e-12)
        heading = box.rotation()[:, 0]
        assert grad @ heading == pytest.approx(d, abs=1e-12)

    def test_empty_box_contributes_zero(self):
        near = Box3D(5.0, 0.0, 0.0, w=2, l=2, h=2, yaw=0.0)
        far = Box3D(-20.0, 0.0, 0.0, w=1, l=1, h=1, yaw=0.0)
        scene = Scene(np.array([[5.4, 0.0, 0.0, 0.0]]))
        loss_one, _ = surrogate_loss(scene, [near])
        loss_two, _ = surrogate_loss(scene, [near, far])
        assert loss_two == pytest.approx(loss_one / 2)

    def test_out_of_box_gradient_zero(self, rng):
        scene, boxes = make_gradcheck_fixture(rng)
        _, field = surrogate_loss(scene, boxes)
        inside = np.zeros(scene.n_points, dtype=bool)
        for b in boxes:
            inside[points_in_box(scene, b)] = True
        assert np.all(field.grads[~inside] == 0.0)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(5):
            scene, boxes = make_gradcheck_fixture(rng)
            assert gradient_relative_error(scene, boxes) < 1e-5

    def test_above_knee_branch(self):
        # single point 3 m off-center: loss = 3 - 0.5, slope 1
        box = Box3D(0.0, 10.0, 0.0, w=8, l=8, h=8, yaw=0.0)
        scene = Scene(np.array([[3.0, 10.0, 0.0, 0.0]]))
        loss, field = surrogate_loss(scene, [box])
        assert loss == pytest.approx(2.5, abs=1e-12)
        assert np.linalg.norm(field.grads[0]) == pytest.approx(1.0, abs=1e-12)


class TestPerturbationDelta:
    def test_norms_equal_epsilon(self, rng):
        grads = rng.normal(size=(100, 3))
        grads[::7] = 0.0
        delta = perturbation_delta(GradientField(grads), 0.001)
        norms = np.linalg.norm(delta, axis=1)
        nz = np.linalg.norm(grads, axis=1) > 0
        assert np.abs(norms[nz] - 0.001).max() < 1e-9
        assert np.all(norms[~nz] == 0.0)

    def test_opposes_gradient_componentwise(self, rng):
        grads = rng.normal(size=(50, 3))
        delta = perturbation_delta(GradientField(grads), 0.5)
        assert np.all(delta * grads <= 0.0)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            perturbation_delta(GradientField(np.zeros((1, 3))), 0.0)

    def test_default_hyperparameters(self):
        cfg = PerturbationConfig()
        assert cfg.epsilon == 0.001
        assert cfg.rho == 0.5
        assert cfg.mode_weights == (1 / 3, 1 / 3, 1 / 3)


class TestAdversarialPerturb:
    def test_rho_zero_only_attaches_labels(self, rng):
        scene = cluster_scene(rng, [(10, 0, 0), (0, 12, 0)])
        boxes = scene.boxes
        bare = Scene(scene.points, [], DomainTag.TARGET_UNLABELED)
        cfg = PerturbationConfig(rho=0.0)
        out = adversarial_perturb(bare, boxes, SurrogateProvider(), cfg, rng)
        assert np.array_equal(out.points, bare.points)
        assert out.boxes == boxes
        assert out.pseudo_labeled

    def test_outside_points_bit_identical(self, rng):
        scene = cluster_scene(rng, [(10, 0, 0)])
        outside = np.array([[30.0, 30.0, 0.0, 0.5], [-25.0, 5.0, 1.0, 0.1]])
        merged = Scene(
            np.vstack([outside, scene.points]), [], DomainTag.TARGET_UNLABELED
        )
        cfg = PerturbationConfig(rho=1.0)
        out = adversarial_perturb(merged, scene.boxes, SurrogateProvider(), cfg, rng)
        assert np.array_equal(out.points[:2], outside)

    def test_point_count_accounting(self, rng):
        scene = cluster_scene(rng, [(10, 0, 0), (0, 12, 0), (-9, -9, 0)])
        bare = Scene(scene.points, [], DomainTag.TARGET_UNLABELED)
        cfg = PerturbationConfig(rho=0.7)
        out, outcome = adversarial_perturb_detailed(
            bare, scene.boxes, SurrogateProvider(), cfg, rng
        )
        assert out.n_points == bare.n_points - outcome.removed + outcome.added
        assert outcome.translated + outcome.added + outcome.removed <= outcome.candidates

    def test_translate_only_descends(self, rng):
        provider = SurrogateProvider()
        cfg = PerturbationConfig(epsilon=0.001, rho=0.5, mode_weights=(1.0, 0.0, 0.0))
        decreased = 0
        trials = 50
        for _ in range(trials):
            centers = [(rng.uniform(5, 20), rng.uniform(-10, 10), 0.0) for _ in range(2)]
            scene = cluster_scene(rng, centers, n_per=30)
            bare = Scene(scene.points, [], DomainTag.TARGET_UNLABELED)
            before, _ = provider.loss_and_gradient(bare, scene.boxes)
            out = adversarial_perturb(bare, scene.boxes, provider, cfg, rng)
            after, _ = provider.loss_and_gradient(out, scene.boxes)
            if after <= before:
                decreased += 1
        assert decreased >= 0.95 * trials

    def test_requires_unlabeled_tag(self, rng):
        scene = cluster_scene(rng, [(10, 0, 0)], domain_tag=DomainTag.SOURCE)
        with pytest.raises(ValueError):
            adversarial_perturb(scene, scene.boxes, SurrogateProvider(), PerturbationConfig(), rng)

    def test_no_boxes_is_noop(self, rng):
        scene = cluster_scene(rng, [(10, 0, 0)])
        bare = Scene(scene.points, [], DomainTag.TARGET_UNLABELED)
        out, outcome = adversarial_perturb_detailed(
            bare, [], SurrogateProvider(), PerturbationConfig(), rng
        )
        assert np.array_equal(out.points, bare.points)
        assert outcome.candidates == 0


class TestPointMixup:
    def test_empty_b_is_identity(self, rng):
        a = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.TARGET_LABELED)
        b = Scene.empty(DomainTag.TARGET_UNLABELED)
        out = point_mixup(a, b)
        assert np.array_equal(out.points, a.points)
        assert out.boxes == a.boxes
        assert out.domain_tag is DomainTag.MIXED

    def test_counts_are_sums(self, rng):
        a = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.TARGET_LABELED)
        b = cluster_scene(rng, [(0, 9, 0), (-7, 3, 0)], domain_tag=DomainTag.TARGET_UNLABELED)
        out = point_mixup(a, b)
        assert out.n_points == a.n_points + b.n_points
        assert len(out.boxes) == len(a.boxes) + len(b.boxes)
        assert out.boxes == a.boxes + b.boxes

    def test_self_mix_doubles(self, rng):
        a = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.TARGET_LABELED)
        out = point_mixup(a, a)
        assert out.n_points == 2 * a.n_points
        assert len(out.boxes) == 2 * len(a.boxes)

    def test_rejects_source_scene(self, rng):
        a = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.TARGET_LABELED)
        s = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.SOURCE)
        with pytest.raises(ValueError):
            point_mixup(a, s)


def _unit_box(cx, cy=0.0, cz=0.0, yaw=0.0, score=None):
    return Box3D(cx, cy, cz, w=1.5, l=1.5, h=1.5, yaw=yaw, score=score)


class TestConsistencyLoss:
    def test_identical_sets_zero(self, rng):
        boxes = [random_box(rng) for _ in range(4)]
        assert consistency_loss(boxes, list(boxes)) == 0.0

    def test_two_singletons_one_meter(self):
        # each side's nearest distance is 1, so (1 + 1) / 2 = 1
        assert consistency_loss([_unit_box(0.0)], [_unit_box(1.0)]) == pytest.approx(1.0)

    def test_symmetry(self, rng):
        for _ in range(30):
            a = [random_box(rng) for _ in range(rng.integers(1, 5))]
            b = [random_box(rng) for _ in range(rng.integers(1, 5))]
            assert consistency_loss(a, b) == pytest.approx(consistency_loss(b, a), abs=1e-12)

    def test_both_empty(self):
        assert consistency_loss([], []) == 0.0

    def test_one_sided_empty(self):
        with pytest.raises(OneSidedEmpty):
            consistency_loss([_unit_box(0.0)], [])
        with pytest.raises(OneSidedEmpty):
            consistency_loss([], [_unit_box(0.0)])

    def test_yaw_class_score_ignored(self):
        a = [_unit_box(0.0, yaw=0.0)]
        b = [_unit_box(1.0, yaw=0.0)]
        b_rotated = [Box3D(1.0, 0, 0, w=1.5, l=1.5, h=1.5, yaw=2.5, class_id=7, score=0.5)]
        assert consistency_loss(a, b) == consistency_loss(a, b_rotated)

    @given(
        st.lists(st.floats(-20, 20), min_size=1, max_size=5),
        st.lists(st.floats(-20, 20), min_size=1, max_size=5),
    )
    @settings(max_examples=50, deadline=None)
    def test_nonnegative_and_symmetric(self, xs, ys):
        a = [_unit_box(x) for x in xs]
        b = [_unit_box(y) for y in ys]
        lab = consistency_loss(a, b)
        assert lab >= 0.0
        assert lab == pytest.approx(consistency_loss(b, a), abs=1e-12)


class TestBatchConsistency:
    def test_all_identical_zero(self, rng):
        boxes = [random_box(rng) for _ in range(3)]
        assert batch_consistency([(boxes, list(boxes))] * 4) == 0.0

    def test_skipped_sample_excluded(self):
        defined = ([_unit_box(0.0)], [_unit_box(1.0)])  # loss 1
        skipped = ([_unit_box(0.0)], [])
        assert batch_consistency([defined, skipped]) == pytest.approx(1.0)

    def test_mean_of_values(self):
        half = ([_unit_box(0.0)], [_unit_box(0.5)])
        one_and_half = ([_unit_box(0.0)], [_unit_box(1.5)])
        assert batch_consistency([half, one_and_half]) == pytest.approx(1.0)

    def test_empty_input(self):
        assert batch_consistency([]) == 0.0


class TestAdvmixSample:
    def make_scenes(self, rng):
        labeled = cluster_scene(rng, [(8, 0, 0)], domain_tag=DomainTag.TARGET_LABELED)
        raw = cluster_scene(rng, [(0, 9, 0)], domain_tag=DomainTag.TARGET_UNLABELED)
        adv = cluster_scene(rng, [(0, 9, 0)], domain_tag=DomainTag.TARGET_UNLABELED)
        return labeled, adv, raw

    def test_mixup_branch(self, rng):
        labeled, adv, raw = self.make_scenes(rng)
        am, pm, mixed = advmix_sample(rng, 1.0, labeled, adv, raw)
        assert mixed
        assert am.n_points == labeled.n_points + adv.n_points
        assert pm.n_points == labeled.n_points + raw.n_points
        assert np.array_equal(pm.points[labeled.n_points :], raw.points)

    def test_no_mixup_branch_swaps_roles(self, rng):
        labeled, adv, raw = self.make_scenes(rng)
        am, pm, mixed = advmix_sample(rng, 0.0, labeled, adv, raw)
        assert not mixed
        assert am is raw
        assert pm is adv
