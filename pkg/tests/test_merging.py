"""Fragment-object association, feature averaging, and hierarchy building."""

import numpy as np
import pytest

from gslift.errors import IntegrityError, PreconditionError
from gslift.lifting import Fragment, FragmentSet
from gslift.merging import (
    MergeConfig,
    ObjectMap,
    SceneObject,
    combine_features,
    geom_overlap,
    hierarchical_decompose,
    merge_frame,
    sem_similarity,
    update_feature,
    validate_hierarchy,
)

from oracles import fragment_stream_components, replay_feature_chain

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def _fragment(mask_id, gaussians, feature=E1, pixel_count=None, frame="f", level="object"):
    gaussians = np.asarray(sorted(gaussians), dtype=np.int64)
    return Fragment(
        frame_id=frame, level=level, mask_id=mask_id, gaussians=gaussians,
        feature=np.asarray(feature, dtype=np.float64),
        pixel_count=len(gaussians) if pixel_count is None else pixel_count,
    )


def _fragset(*frags, frame="f", level="object"):
    return FragmentSet(frame_id=frame, level=level, fragments=list(frags))


def _loose_config(**kw):
    defaults = dict(tau_geom=0.0, tau_sem=0.0, lambda_sem=1.0)
    defaults.update(kw)
    return MergeConfig(**defaults)


class TestGeomOverlap:
    def test_frozen_example(self):
        assert geom_overlap({1, 2, 3, 4}, {3, 4, 5}) == 0.5

    def test_disjoint(self):
        assert geom_overlap({1, 2}, {3, 4}) == 0.0

    def test_subset(self):
        assert geom_overlap({3, 4}, {1, 2, 3, 4, 5}) == 1.0

    def test_empty_current(self):
        with pytest.raises(PreconditionError):
            geom_overlap(set(), {1})


class TestSemSimilarity:
    def test_fixed_points(self):
        assert sem_similarity(E1, E1) == 1.0
        assert sem_similarity(E1, E2) == 0.5
        assert sem_similarity(E1, -E1) == 0.0

    def test_printed_variant(self):
        assert sem_similarity(E1, E1, printed=True) == 0.5
        assert sem_similarity(E1, E2, printed=True) == 0.0
        assert sem_similarity(E1, -E1, printed=True) == -0.5

    def test_non_unit_rejected(self):
        with pytest.raises(PreconditionError, match="unit-norm"):
            sem_similarity(np.array([2.0, 0.0]), E1)

    def test_range_on_random_pairs(self, rng):
        for _ in range(20):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            assert 0.0 <= sem_similarity(a, b) <= 1.0


class TestUpdateFeature:
    def test_frozen_n1(self):
        out = update_feature(E1, 1, E2)
        np.testing.assert_allclose(out, [np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-9)

    def test_fixed_point(self):
        f = np.array([0.6, 0.8])
        for n in (1, 2, 7):
            np.testing.assert_allclose(update_feature(f, n, f), f, atol=1e-12)

    def test_frozen_n3(self):
        out = update_feature(E1, 3, E2)
        want = np.array([0.75, 0.25]) / np.linalg.norm([0.75, 0.25])
        np.testing.assert_allclose(out, want, atol=1e-9)
        np.testing.assert_allclose(out, [0.9487, 0.3162], atol=5e-5)

    def test_antipodal_keeps_previous(self, caplog):
        with caplog.at_level("WARNING"):
            out = update_feature(E1, 1, -E1)
        np.testing.assert_array_equal(out, E1)
        assert "zero norm" in caplog.text

    def test_n_below_one_rejected(self):
        with pytest.raises(PreconditionError):
            update_feature(E1, 0, E2)

    def test_unit_norm_after_updates(self, rng):
        f = E1.copy()
        for n in range(1, 30):
            new = rng.normal(size=2)
            new /= np.linalg.norm(new)
            f = update_feature(f, n, new)
            assert abs(np.linalg.norm(f) - 1.0) < 1e-6

    def test_chain_matches_replay_oracle(self, rng):
        feats = rng.normal(size=(6, 4))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        f = feats[0].copy()
        for n, new in enumerate(feats[1:], start=1):
            f = update_feature(f, n, new)
        np.testing.assert_allclose(f, replay_feature_chain(list(feats)), atol=1e-12)

    def test_combine_features_weighted(self):
        out = combine_features(E1, 3, E2, 1)
        want = np.array([0.75, 0.25]) / np.linalg.norm([0.75, 0.25])
        np.testing.assert_allclose(out, want, atol=1e-12)


class TestMergeFrame:
    def test_cold_start(self):
        omap = ObjectMap("object", 20)
        fragset = _fragset(
            _fragment(1, [0, 1, 2], E1),
            _fragment(2, [5, 6], E2),
        )
        merge_frame(omap, fragset, _loose_config())
        assert len(omap) == 2
        sets = {frozenset(o.gaussians) for o in omap.objects.values()}
        assert sets == {frozenset({0, 1, 2}), frozenset({5, 6})}
        omap.check_consistency()

    def test_perfect_match_increments_count(self):
        omap = ObjectMap("object", 10)
        merge_frame(omap, _fragset(_fragment(1, [0, 1, 2], E1)), _loose_config())
        before = len(omap)
        merge_frame(omap, _fragset(_fragment(1, [0, 1, 2], E1)), _loose_config())
        assert len(omap) == before
        obj = next(iter(omap.objects.values()))
        assert obj.fragment_count == 2
        np.testing.assert_allclose(obj.feature, E1)

    def test_semantic_gate_blocks_merge(self):
        omap = ObjectMap("object", 10)
        config = MergeConfig(tau_geom=0.1, tau_sem=0.75, lambda_sem=1.0)
        merge_frame(omap, _fragset(_fragment(1, [0, 1, 2], E1)), config)
        # same Gaussians, orthogonal feature: similarity 0.5 < 0.75
        merge_frame(omap, _fragset(_fragment(1, [0, 1, 2], E2)), config)
        assert len(omap) == 1  # stolen into a fresh object, old one emptied
        obj = next(iter(omap.objects.values()))
        np.testing.assert_allclose(obj.feature, E2)

    def test_geometric_gate_blocks_merge(self):
        omap = ObjectMap("object", 100)
        config = MergeConfig(tau_geom=0.5, tau_sem=0.0, lambda_sem=1.0)
        merge_frame(omap, _fragset(_fragment(1, range(10), E1)), config)
        # only 2 of 10 Gaussians overlap: 0.2 < 0.5
        merge_frame(omap, _fragset(_fragment(1, list(range(8, 18)), E1)), config)
        assert len(omap) == 2
        omap.check_consistency()

    def test_score_prefers_higher_overlap(self):
        omap = ObjectMap("object", 100)
        config = _loose_config(lambda_sem=0.0)
        merge_frame(omap, _fragset(
            _fragment(1, range(0, 10), E1),
            _fragment(2, range(10, 30), E1),
        ), config)
        # overlaps: 3/4 with the 20-set's object vs 1/4 with the 10-set's
        incoming = _fragment(1, [0, 10, 11, 12], E1)
        merge_frame(omap, _fragset(incoming), config)
        owners = omap.owner[[10, 11, 12, 0]]
        assert len(set(owners.tolist())) == 1  # all moved to one object
        target = omap.objects[int(owners[0])]
        assert {10, 11, 12}.issubset(target.gaussians)

    def test_tie_breaks_to_lower_object_id(self):
        omap = ObjectMap("object", 100)
        config = _loose_config(lambda_sem=0.0)
        merge_frame(omap, _fragset(
            _fragment(1, range(0, 10), E1),
            _fragment(2, range(10, 20), E1),
        ), config)
        # equal overlap 1/2 with both objects; absorption folds both into 1
        merge_frame(omap, _fragset(_fragment(1, [0, 10], E1)), config)
        assert list(omap.objects) == [1]
        omap.check_consistency()

    def test_larger_fragments_processed_first(self):
        omap = ObjectMap("object", 100)
        merge_frame(omap, _fragset(
            _fragment(1, [0], E1, pixel_count=5),
            _fragment(2, [1, 2, 3], E1, pixel_count=50),
        ), _loose_config())
        # mask 2 has more pixels, so it founds object 1
        assert omap.owner[1] == 1 and omap.owner[0] == 2

    def test_conflict_steals_and_deletes_emptied(self):
        omap = ObjectMap("object", 50)
        config = MergeConfig(tau_geom=0.9, tau_sem=0.0, lambda_sem=0.0)
        merge_frame(omap, _fragset(_fragment(1, [0, 1], E1)), config)
        merge_frame(omap, _fragset(_fragment(1, [5, 6, 7], E1)), config)
        assert len(omap) == 2
        # low overlap with both -> new object stealing 0,1 and 5: object of
        # {0,1} empties out and disappears
        merge_frame(omap, _fragset(_fragment(1, [0, 1, 5, 20, 21], E1)), config)
        assert len(omap) == 2
        omap.check_consistency()
        survivor_sets = sorted(len(o.gaussians) for o in omap.objects.values())
        assert survivor_sets == [2, 5]

    def test_labeled_count_monotone(self, rng):
        omap = ObjectMap("object", 200)
        config = MergeConfig(tau_geom=0.1, tau_sem=0.5, lambda_sem=1.0)
        last = 0
        for t in range(12):
            members = rng.choice(200, size=rng.integers(3, 30), replace=False)
            frag = _fragment(1, members, E1, frame=f"f{t}")
            merge_frame(omap, _fragset(frag, frame=f"f{t}"), config)
            omap.check_consistency()
            now = omap.labeled_count()
            assert now >= last
            last = now

    def test_degenerate_merge_is_union_find(self, rng):
        # zero thresholds + constant features = connected components
        n = 120
        streams = []
        omap = ObjectMap("object", n)
        for t in range(8):
            frame_frags = []
            used = set()
            for m in range(1, rng.integers(2, 5)):
                pool = [g for g in range(n) if g not in used]
                members = rng.choice(pool, size=min(len(pool), int(rng.integers(2, 15))),
                                     replace=False)
                used.update(int(g) for g in members)
                frame_frags.append(members)
            streams.append(frame_frags)
            fragset = _fragset(*[
                _fragment(i + 1, members, E1, frame=f"f{t}")
                for i, members in enumerate(frame_frags)
            ], frame=f"f{t}")
            merge_frame(omap, fragset, _loose_config())
        got = {frozenset(o.gaussians) for o in omap.objects.values()}
        want = set(fragment_stream_components(streams, n))
        assert got == want

    def test_two_cluster_recovery_with_subsets(self, rng):
        cluster_a = np.arange(0, 50)
        cluster_b = np.arange(50, 100)
        omap = ObjectMap("object", 100)
        config = MergeConfig(tau_geom=0.1, tau_sem=0.75, lambda_sem=1.0)
        feats = np.eye(2)
        for t in range(5):
            frags = []
            for mask_id, (cluster, feat) in enumerate(
                    [(cluster_a, feats[0]), (cluster_b, feats[1])], start=1):
                members = rng.choice(cluster, size=30, replace=False)
                frags.append(_fragment(mask_id, members, feat, frame=f"f{t}"))
            merge_frame(omap, _fragset(*frags, frame=f"f{t}"), config)
        assert len(omap) == 2
        sets = sorted(
            (frozenset(o.gaussians) for o in omap.objects.values()), key=min
        )
        assert sets[0] <= set(cluster_a.tolist())
        assert sets[1] <= set(cluster_b.tolist())
        # brute-force check: every fragment's best candidate is its own cluster
        omap.check_consistency()


class _DirectStream:
    """Feeds prebuilt fragments through hierarchical_decompose's lift stage.

    hierarchical_decompose lifts from buffers; for unit tests it is easier
    to synthesize the buffers that lift into exactly the fragments we want:
    one pixel per Gaussian, mask id painting the fragment id.
    """

    def __init__(self, n_gaussians, frames):
        self.n = n_gaussians
        self.frames = frames

    def __iter__(self):
        from gslift.io.features import FeatureTable
        from gslift.io.masks import MaskMap
        from gslift.raster.render import RenderBuffers

        for frame_id, frags in self.frames:
            width = self.n
            mc = np.full((1, width), -1, dtype=np.int32)
            ids = np.zeros((1, width), dtype=np.uint16)
            rows = []
            for mask_id, (members, feature) in enumerate(frags, start=1):
                for g in members:
                    mc[0, g] = g
                    ids[0, g] = mask_id
                rows.append(feature)
            buffers = RenderBuffers(
                color=None,
                alpha=np.ones((1, width), dtype=np.float32),
                max_contributor=mc,
                max_weight=np.full((1, width), 0.5, dtype=np.float32),
            )
            yield frame_id, buffers, MaskMap(ids=ids), FeatureTable(rows=np.asarray(rows))


class TestHierarchicalDecompose:
    def _parent(self, n, sets):
        omap = ObjectMap("object", n)
        for members in sets:
            oid = omap.allocate_id()
            omap.objects[oid] = SceneObject(
                object_id=oid, gaussians=set(members), feature=E1.copy(),
            )
            omap.owner[list(members)] = oid
        omap.check_consistency()
        return omap

    def test_identical_masks_reproduce_parents(self):
        parent = self._parent(20, [range(0, 8), range(10, 16)])
        stream = _DirectStream(20, [
            ("f0", [(range(0, 8), E1), (range(10, 16), E1)]),
            ("f1", [(range(0, 8), E1), (range(10, 16), E1)]),
        ])
        child, diag = hierarchical_decompose(
            parent, stream, "part", _loose_config(), min_pixels=0, min_gaussians=0,
        )
        assert len(child) == 2
        child_sets = {frozenset(o.gaussians) for o in child.objects.values()}
        parent_sets = {frozenset(o.gaussians) for o in parent.objects.values()}
        assert child_sets == parent_sets
        assert diag["fragments_without_parent"] == 0
        validate_hierarchy(child, parent)

    def test_two_halves_union_is_parent(self):
        parent = self._parent(30, [range(0, 20)])
        halves = [(range(0, 10), E1), (range(10, 20), E2)]
        stream = _DirectStream(30, [(f"f{t}", halves) for t in range(3)])
        child, _ = hierarchical_decompose(
            parent, stream, "part", _loose_config(), min_pixels=0, min_gaussians=0,
        )
        assert len(child) == 2
        union = set()
        for obj in child.objects.values():
            assert obj.gaussians <= set(range(20))
            assert obj.parent_id == 1
            union |= obj.gaussians
        assert union == set(range(20))
        validate_hierarchy(child, parent)

    def test_straddling_fragment_clipped_to_plurality_parent(self):
        parent = self._parent(100, [range(0, 50), range(50, 100)])
        # 6 members inside parent 1 (44..49), 4 inside parent 2 (50,51,60,61)
        members = list(range(44, 52)) + [60, 61]
        stream = _DirectStream(100, [("f0", [(members, E1)])])
        child, _ = hierarchical_decompose(
            parent, stream, "part", _loose_config(), min_pixels=0, min_gaussians=0,
        )
        assert len(child) == 1
        obj = next(iter(child.objects.values()))
        # 44..49 live in parent 1 (6 members), 50,51,60,61 in parent 2 (4):
        # plurality keeps only the parent-1 share
        assert obj.gaussians == set(range(44, 50))
        assert obj.parent_id == 1

    def test_unparented_fragment_counted(self):
        parent = self._parent(40, [range(0, 10)])
        stream = _DirectStream(40, [("f0", [(range(20, 30), E1)])])
        child, diag = hierarchical_decompose(
            parent, stream, "part", _loose_config(), min_pixels=0, min_gaussians=0,
        )
        assert len(child) == 0
        assert diag["fragments_without_parent"] == 1

    def test_validate_hierarchy_rejects_spanning_child(self):
        parent = self._parent(20, [range(0, 5), range(5, 10)])
        child = self._parent(20, [range(3, 8)])
        child.level = "part"
        with pytest.raises(IntegrityError, match="spans"):
            validate_hierarchy(child, parent)


class TestMergeConfig:
    def test_threshold_validation(self):
        with pytest.raises(PreconditionError):
            MergeConfig(tau_geom=1.5)
        with pytest.raises(PreconditionError):
            MergeConfig(tau_sem=-0.1)
        with pytest.raises(PreconditionError):
            MergeConfig(lambda_sem=-1.0)
