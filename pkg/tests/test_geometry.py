import numpy as np
import pytest

from shad3s.geometry import (
    CsgScene, Leaf, Op, Primitive, SceneError, SceneParseError, Transform,
    contains, leaf_count, parse_scene, sample_scene, serialize_scene,
    signed_distance,
)


def unit_sphere_scene(center=(0.0, 0.0, 0.0)):
    leaf = Leaf(Primitive("sphere", (1.0,)), Transform(center))
    return CsgScene(leaf, max_solids=1)


class TestPrimitive:
    def test_negative_size_rejected(self):
        with pytest.raises(SceneError):
            Primitive("sphere", (-1.0,))

    def test_torus_minor_must_be_smaller(self):
        with pytest.raises(SceneError):
            Primitive("torus", (0.5, 0.6))

    def test_unknown_kind(self):
        with pytest.raises(SceneError):
            Primitive("pyramid", (1.0,))


class TestSignedDistance:
    def test_sphere_center(self):
        assert signed_distance(unit_sphere_scene(), (0, 0, 0)) == pytest.approx(-1.0)

    def test_sphere_outside(self):
        assert signed_distance(unit_sphere_scene(), (2, 0, 0)) == pytest.approx(1.0)

    def test_box_faces(self):
        leaf = Leaf(Primitive("box", (1.0, 1.0, 1.0)))
        scene = CsgScene(leaf, max_solids=1)
        assert signed_distance(scene, (2, 0, 0)) == pytest.approx(1.0)
        assert signed_distance(scene, (0, 0, 0)) == pytest.approx(-1.0)

    def test_translated_scaled_sphere(self):
        leaf = Leaf(Primitive("sphere", (1.0,)), Transform((3, 0, 0), scale=2.0))
        scene = CsgScene(leaf, max_solids=1)
        assert signed_distance(scene, (3, 0, 0)) == pytest.approx(-2.0)
        assert signed_distance(scene, (6, 0, 0)) == pytest.approx(1.0)

    def test_difference_against_voxel_oracle(self):
        # difference(box 1,1,1, sphere r=1): corner region is inside the box
        # but outside the sphere, hence inside the difference
        node = Op("difference",
                  Leaf(Primitive("box", (1.0, 1.0, 1.0))),
                  Leaf(Primitive("sphere", (1.0,))))
        scene = CsgScene(node, max_solids=2)
        assert signed_distance(scene, (0.99, 0.99, 0.99)) < 0
        # 64^3 voxel oracle: direct boolean set evaluation, no SDF involved
        axis = np.linspace(-1.2, 1.2, 64)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([gx, gy, gz], axis=-1)
        in_box = np.all(np.abs(pts) < 1.0, axis=-1)
        in_sph = np.sum(pts ** 2, axis=-1) < 1.0
        oracle = in_box & ~in_sph
        d = signed_distance(scene, pts)
        sure = np.abs(d) > 1e-6
        assert np.array_equal(d[sure] < 0, oracle[sure])

    def test_sign_matches_membership_on_random_scenes(self):
        rng = np.random.default_rng(0)
        for seed in range(5):
            scene = sample_scene(seed, 6)
            pts = rng.uniform(-4, 4, size=(10_000, 3))
            d = signed_distance(scene, pts)
            m = contains(scene, pts)
            sure = np.abs(d) > 1e-6
            assert np.array_equal(d[sure] < 0, m[sure])


class TestSampleScene:
    def test_single_solid_is_leaf(self):
        scene = sample_scene(7, 1)
        assert leaf_count(scene.root) == 1

    def test_deterministic(self):
        assert sample_scene(7, 6) == sample_scene(7, 6)

    def test_invalid_max_solids(self):
        with pytest.raises(SceneError):
            sample_scene(1, 0)
        with pytest.raises(SceneError):
            sample_scene(1, 7)

    def test_leaf_count_bound(self):
        for seed in range(50):
            scene = sample_scene(seed, 4)
            assert 1 <= leaf_count(scene.root) <= 4

    def test_above_ground_and_bounded(self):
        for seed in range(20):
            scene = sample_scene(seed, 6)
            assert scene.bounding_radius() <= 4.0 + 1e-9
            for leaf in _leaves(scene.root):
                cy = leaf.transform.translation[1]
                assert cy - leaf.primitive.bounding_radius() * leaf.transform.scale >= -1e-9

    def test_leaf_count_distribution(self):
        # Monte-Carlo: leaf count targeted uniform over {1..6}; degenerate-op
        # fallbacks can only lower counts, so allow the stated 0.02 slack
        counts = np.zeros(6)
        n = 10_000
        for seed in range(n):
            counts[leaf_count(sample_scene(seed, 6).root) - 1] += 1
        freqs = counts / n
        assert np.all(np.abs(freqs - 1 / 6) <= 0.02)


def _leaves(node):
    if isinstance(node, Leaf):
        yield node
    else:
        yield from _leaves(node.left)
        yield from _leaves(node.right)


class TestGrammar:
    def test_round_trip_sampled(self):
        scene = sample_scene(7, 3)
        text = serialize_scene(scene)
        parsed = parse_scene(text, seed=scene.seed, max_solids=scene.max_solids)
        assert parsed.root == scene.root

    def test_round_trip_many(self):
        for seed in range(100):
            scene = sample_scene(seed, 6)
            assert parse_scene(serialize_scene(scene)).root == scene.root

    def test_literal_union(self):
        scene = parse_scene("union(sphere(r=1), box(hx=1,hy=1,hz=1))")
        assert isinstance(scene.root, Op)
        assert scene.root.kind == "union"
        assert leaf_count(scene.root) == 2

    def test_negative_radius_semantic_error(self):
        with pytest.raises(SceneError):
            parse_scene("sphere(r=-1)")

    def test_syntax_error_has_location(self):
        with pytest.raises(SceneParseError) as exc:
            parse_scene("union(sphere(r=1)")
        assert exc.value.line == 1

    def test_too_many_solids(self):
        text = "sphere(r=1)"
        for _ in range(6):
            text = f"union({text}, sphere(r=1))"
        with pytest.raises(SceneError):
            parse_scene(text)
