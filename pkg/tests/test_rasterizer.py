"""Projection, tiled compositing, and view-statistics contracts."""

import numpy as np
import pytest

from gslift.errors import PreconditionError
from gslift.io.gaussian_field import GaussianField
from gslift.io.manifest import Frame
from gslift.raster.projection import (
    COV2D_FLOOR,
    SH_C0,
    SH_C1,
    eval_sh_colors,
    project_gaussians,
    sort_by_depth,
)
from gslift.raster.render import (
    load_contributor_dump,
    render_frame,
    save_contributor_dump,
)
from gslift.raster.stats import ViewStats, accumulate_view_stats, merge_view_stats

from oracles import (
    composite_reference,
    composite_reference_scalar,
    monte_carlo_projected_cov,
)
from synth import dc_for_color, random_field, unit_quats


def _frame(width=64, height=64, fx=80.0, fy=80.0):
    return Frame(
        frame_id="t", width=width, height=height, fx=fx, fy=fy,
        cx=width / 2.0, cy=height / 2.0,
        rotation=np.eye(3), translation=np.zeros(3),
    )


def _single_gaussian(position, scale, opacity, color):
    sh = np.zeros((1, 1, 3))
    sh[0, 0] = dc_for_color(np.asarray(color, dtype=np.float64))
    return GaussianField(
        positions=np.asarray([position], dtype=np.float32),
        scales=np.full((1, 3), scale),
        rotations=np.array([[1.0, 0.0, 0.0, 0.0]]),
        opacities=np.array([opacity]),
        sh_coeffs=sh,
    )


class TestProjection:
    def test_on_axis_hits_principal_point(self):
        frame = _frame()
        field = _single_gaussian([0.0, 0.0, 4.0], 0.1, 0.9, [1, 0, 0])
        proj = project_gaussians(field, frame)
        assert len(proj) == 1
        np.testing.assert_allclose(proj.mean2d[0], [32.0, 32.0], atol=1e-12)
        assert proj.depth[0] == pytest.approx(4.0)

    def test_covariance_matches_monte_carlo(self, rng):
        frame = _frame(fx=120.0, fy=120.0)
        for trial in range(4):
            position = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                 rng.uniform(3.5, 5.0)])
            scale = rng.uniform(0.02, 0.06, size=3)
            quat = unit_quats(rng, 1)[0]
            field = GaussianField(
                positions=position[None].astype(np.float32),
                scales=scale[None],
                rotations=quat[None],
                opacities=np.array([0.9]),
                sh_coeffs=np.zeros((1, 1, 3)),
            )
            proj = project_gaussians(field, frame)
            sampled = monte_carlo_projected_cov(
                position, field.covariances()[0], frame.rotation, frame.translation,
                frame.fx, frame.fy, samples=400_000, seed=trial,
            )
            expected = sampled + COV2D_FLOOR * np.eye(2)
            np.testing.assert_allclose(proj.cov2d[0], expected, rtol=0.01, atol=0.01)

    def test_isotropic_closed_form(self):
        # footprint of an isotropic blob: (f*s/z)^2 on the diagonal plus floor
        frame = _frame(fx=100.0, fy=100.0)
        s, z = 0.05, 5.0
        field = _single_gaussian([0.0, 0.0, z], s, 0.9, [1, 1, 1])
        proj = project_gaussians(field, frame)
        want = (frame.fx * s / z) ** 2 + COV2D_FLOOR
        assert proj.cov2d[0, 0, 0] == pytest.approx(want, rel=0.01)
        assert proj.cov2d[0, 1, 1] == pytest.approx(want, rel=0.01)

    def test_near_plane_culling(self):
        frame = _frame()
        field = _single_gaussian([0.0, 0.0, 0.005], 0.1, 0.9, [1, 0, 0])
        assert len(project_gaussians(field, frame, near=0.01)) == 0

    def test_behind_camera_culled(self):
        frame = _frame()
        field = _single_gaussian([0.0, 0.0, -3.0], 0.1, 0.9, [1, 0, 0])
        assert len(project_gaussians(field, frame)) == 0

    def test_viewport_culling(self):
        frame = _frame()
        field = _single_gaussian([50.0, 0.0, 4.0], 0.05, 0.9, [1, 0, 0])
        assert len(project_gaussians(field, frame)) == 0

    def test_original_indices_preserved(self, rng):
        frame = _frame()
        field = random_field(rng, 50)
        # push half the field behind the camera
        positions = field.positions.copy()
        positions[::2, 2] = -5.0
        field = GaussianField(
            positions=positions, scales=field.scales, rotations=field.rotations,
            opacities=field.opacities, sh_coeffs=field.sh_coeffs,
        )
        proj = project_gaussians(field, frame)
        assert np.all(proj.index % 2 == 1)


class TestSortByDepth:
    def _proj_with_depths(self, depths, indices=None):
        n = len(depths)
        positions = np.zeros((n, 3), dtype=np.float32)
        positions[:, 2] = 4.0
        positions[:, 0] = np.linspace(-0.2, 0.2, n)
        field = GaussianField(
            positions=positions,
            scales=np.full((n, 3), 0.05),
            rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
            opacities=np.full(n, 0.9),
            sh_coeffs=np.zeros((n, 1, 3)),
        )
        proj = project_gaussians(field, _frame())
        assert len(proj) == n
        proj.depth[:] = depths
        if indices is not None:
            proj.index[:] = indices
        return proj

    def test_orders_ascending(self):
        proj = self._proj_with_depths([3.0, 1.0, 2.0])
        out = sort_by_depth(proj)
        np.testing.assert_array_equal(out.depth, [1.0, 2.0, 3.0])

    def test_tie_break_by_index(self):
        proj = self._proj_with_depths([4.0, 4.0], indices=[5, 2])
        out = sort_by_depth(proj)
        np.testing.assert_array_equal(out.index, [2, 5])

    def test_idempotent(self, rng):
        field = random_field(rng, 40)
        once = sort_by_depth(project_gaussians(field, _frame()))
        twice = sort_by_depth(once)
        np.testing.assert_array_equal(once.index, twice.index)
        np.testing.assert_array_equal(once.depth, twice.depth)


@pytest.mark.usefixtures("warm_renderer")
class TestRenderFrame:
    def test_single_gaussian_center_pixel(self):
        # principal point at (32.5, 32.5) puts the mean exactly on the center
        # of pixel (32, 32), so the falloff term is 1 and alpha is 0.99
        frame = Frame(
            frame_id="c", width=64, height=64, fx=80.0, fy=80.0, cx=32.5, cy=32.5,
            rotation=np.eye(3), translation=np.zeros(3),
        )
        field = _single_gaussian([0.0, 0.0, 4.0], 0.3, 0.99, [1.0, 0.0, 0.0])
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="both")
        np.testing.assert_allclose(buf.color[32, 32], [1.0, 0.01, 0.01], atol=1e-6)
        assert buf.max_contributor[32, 32] == 0
        assert buf.max_weight[32, 32] == pytest.approx(0.99, abs=1e-6)

    def test_two_coincident_gaussians(self):
        frame = Frame(
            frame_id="c", width=64, height=64, fx=80.0, fy=80.0, cx=32.5, cy=32.5,
            rotation=np.eye(3), translation=np.zeros(3),
        )
        sh = np.zeros((2, 1, 3))
        sh[0, 0] = dc_for_color(np.array([1.0, 0.0, 0.0]))
        sh[1, 0] = dc_for_color(np.array([0.0, 1.0, 0.0]))
        field = GaussianField(
            positions=np.array([[0, 0, 4.0], [0, 0, 5.0]], dtype=np.float32),
            scales=np.full((2, 3), 0.5),
            rotations=np.tile([1.0, 0, 0, 0], (2, 1)),
            opacities=np.array([0.6, 0.9]),
            sh_coeffs=sh,
        )
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="both")
        # at the shared center: front weight 0.6, back 0.9*0.4 = 0.36
        assert buf.max_contributor[32, 32] == 0
        assert buf.max_weight[32, 32] == pytest.approx(0.6, abs=1e-3)

    def test_matches_reference_composite(self, rng):
        frame = _frame()
        field = random_field(rng, 200)
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="both")
        ref = composite_reference(proj, 64, 64, (1.0, 1.0, 1.0))
        np.testing.assert_allclose(buf.color, ref["color"], atol=1e-5)
        np.testing.assert_allclose(buf.alpha, ref["alpha"], atol=1e-5)
        decisive = ref["margin"] > 1e-6
        np.testing.assert_array_equal(
            buf.max_contributor[decisive], ref["max_contributor"][decisive]
        )

    def test_weight_transmittance_conservation(self, rng):
        frame = _frame()
        field = random_field(rng, 300)
        proj = sort_by_depth(project_gaussians(field, frame))
        ref = composite_reference(proj, 64, 64, (0.0, 0.0, 0.0))
        total = ref["weight_sum"] + ref["transmittance"]
        np.testing.assert_allclose(total, 1.0, atol=1e-5)

    def test_oracle_vectorization_matches_scalar(self, rng):
        frame = _frame(width=24, height=24, fx=30.0, fy=30.0)
        field = random_field(rng, 60)
        proj = sort_by_depth(project_gaussians(field, frame))
        fast = composite_reference(proj, 24, 24, (1.0, 0.5, 0.0))
        slow = composite_reference_scalar(proj, 24, 24, (1.0, 0.5, 0.0))
        for key in fast:
            np.testing.assert_array_equal(fast[key], slow[key])

    def test_full_subset_is_identity(self, rng):
        frame = _frame()
        field = random_field(rng, 120)
        proj = sort_by_depth(project_gaussians(field, frame))
        plain = render_frame(proj, 64, 64, mode="both")
        subset = render_frame(proj, 64, 64, mode="both", subset=np.arange(120))
        np.testing.assert_array_equal(plain.color, subset.color)
        np.testing.assert_array_equal(plain.max_contributor, subset.max_contributor)
        np.testing.assert_array_equal(plain.max_weight, subset.max_weight)

    def test_subset_matches_reference(self, rng):
        frame = _frame()
        field = random_field(rng, 150)
        proj = sort_by_depth(project_gaussians(field, frame))
        members = np.sort(rng.choice(150, size=60, replace=False))
        buf = render_frame(proj, 64, 64, mode="both", subset=members)
        ref = composite_reference(proj, 64, 64, (1.0, 1.0, 1.0), subset=members)
        np.testing.assert_allclose(buf.color, ref["color"], atol=1e-5)
        outside = np.setdiff1d(np.arange(150), members)
        assert not np.isin(buf.max_contributor, outside).any()

    def test_deterministic_rerender(self, rng):
        frame = _frame()
        field = random_field(rng, 100)
        proj = sort_by_depth(project_gaussians(field, frame))
        a = render_frame(proj, 64, 64, mode="both")
        b = render_frame(proj, 64, 64, mode="both")
        np.testing.assert_array_equal(a.color, b.color)
        np.testing.assert_array_equal(a.max_contributor, b.max_contributor)

    def test_contributor_weight_sentinel_invariant(self, rng):
        frame = _frame()
        field = random_field(rng, 80)
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="both")
        none = buf.max_contributor == -1
        assert np.all(buf.max_weight[none] == 0.0)
        assert np.all(buf.max_weight[~none] > 0.0)
        assert np.all(buf.alpha >= buf.max_weight - 1e-9)

    def test_background_passthrough(self):
        frame = _frame()
        field = _single_gaussian([0.0, 0.0, -4.0], 0.1, 0.9, [1, 0, 0])
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="color", background=(0.2, 0.4, 0.6))
        np.testing.assert_allclose(buf.color, np.broadcast_to([0.2, 0.4, 0.6], (64, 64, 3)))

    def test_unsorted_input_rejected(self, rng):
        frame = _frame()
        field = random_field(rng, 30)
        proj = project_gaussians(field, frame)
        proj.depth[0], proj.depth[-1] = proj.depth[-1], proj.depth[0]
        if proj.is_depth_sorted():
            pytest.skip("random draw came out sorted")
        with pytest.raises(PreconditionError):
            render_frame(proj, 64, 64, mode="color")

    def test_dump_round_trip(self, tmp_path, rng):
        frame = _frame()
        field = random_field(rng, 90)
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="both")
        path = tmp_path / "buffers.lbgb"
        save_contributor_dump(buf, path)
        back = load_contributor_dump(path)
        np.testing.assert_array_equal(back.max_contributor, buf.max_contributor)
        np.testing.assert_allclose(back.max_weight, buf.max_weight, atol=1e-7)


class TestSphericalHarmonics:
    def test_degree_zero_constant(self, rng):
        sh = np.zeros((5, 1, 3))
        colors = rng.uniform(0.1, 0.9, size=(5, 3))
        sh[:, 0, :] = dc_for_color(colors)
        dirs = rng.normal(size=(5, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        np.testing.assert_allclose(eval_sh_colors(dirs, sh, 0), colors, atol=1e-12)

    def test_degree_one_linear_term(self, rng):
        sh = np.zeros((1, 4, 3))
        sh[0, 0] = dc_for_color(np.array([0.5, 0.5, 0.5]))
        sh[0, 1] = [0.3, 0.0, 0.0]
        sh[0, 2] = [0.0, 0.2, 0.0]
        sh[0, 3] = [0.0, 0.0, -0.1]
        d = np.array([[0.6, -0.8, 0.0]])
        got = eval_sh_colors(d, sh, 1)
        want = 0.5 + SH_C1 * np.array([
            -d[0, 1] * 0.3, d[0, 2] * 0.2, -d[0, 0] * (-0.1),
        ])
        np.testing.assert_allclose(got[0], np.clip(want, 0.0, 1.0), atol=1e-12)

    def test_clamped_to_unit_range(self):
        sh = np.zeros((1, 1, 3))
        sh[0, 0] = dc_for_color(np.array([3.0, -2.0, 0.5]))
        got = eval_sh_colors(np.array([[0.0, 0.0, 1.0]]), sh, 0)
        np.testing.assert_array_equal(got[0], [1.0, 0.0, 0.5])

    def test_lowercase_constant_value(self):
        # degree-0 basis constant of the real spherical harmonics
        assert SH_C0 == pytest.approx(0.28209479177387814, abs=1e-15)


@pytest.mark.usefixtures("warm_renderer")
class TestViewStats:
    def _buffers_for(self, field, frame):
        proj = sort_by_depth(project_gaussians(field, frame))
        return render_frame(proj, frame.width, frame.height, mode="contributor")

    def test_view_count_once_per_frame(self):
        frame = _frame()
        field = _single_gaussian([0.0, 0.0, 4.0], 0.4, 0.99, [1, 0, 0])
        buf = self._buffers_for(field, frame)
        assert (buf.max_contributor == 0).sum() > 100  # covers many pixels
        stats = accumulate_view_stats(ViewStats.zeros(1), buf)
        assert stats.view_count[0] == 1

    def test_never_contributing_scores_zero(self, rng):
        frame = _frame()
        field = random_field(rng, 40)
        # a fully hidden Gaussian: behind the camera, culled at projection
        positions = field.positions.copy()
        positions[7, 2] = -10.0
        field = GaussianField(
            positions=positions, scales=field.scales, rotations=field.rotations,
            opacities=field.opacities, sh_coeffs=field.sh_coeffs,
        )
        buf = self._buffers_for(field, frame)
        stats = accumulate_view_stats(ViewStats.zeros(40), buf)
        silent = np.setdiff1d(np.arange(40), np.unique(buf.max_contributor))
        assert 7 in silent
        assert np.all(stats.consistency_scores()[silent] == 0.0)

    def test_score_formula(self):
        # two max-contributor frames, total accumulated weight 10
        stats = ViewStats.zeros(1)
        stats.view_count[0] = 2
        stats.opacity_contribution[0] = 10.0
        assert stats.consistency_scores()[0] == pytest.approx(10.0 * np.log(3.0))

    def test_contribution_accumulates_weights(self, rng):
        frame = _frame()
        field = random_field(rng, 60)
        proj = sort_by_depth(project_gaussians(field, frame))
        buf = render_frame(proj, 64, 64, mode="contributor")
        stats = accumulate_view_stats(ViewStats.zeros(60), buf)
        ref = composite_reference(proj, 64, 64, (1, 1, 1))
        for g in range(60):
            mine = ref["max_weight"][ref["max_contributor"] == g].sum()
            assert stats.opacity_contribution[g] == pytest.approx(mine, abs=1e-6)

    def test_merge_equals_sequential(self, rng):
        frame_a = _frame()
        field = random_field(rng, 50)
        buf = self._buffers_for(field, frame_a)
        seq = accumulate_view_stats(
            accumulate_view_stats(ViewStats.zeros(50), buf), buf
        )
        merged = merge_view_stats(
            accumulate_view_stats(ViewStats.zeros(50), buf),
            accumulate_view_stats(ViewStats.zeros(50), buf),
        )
        np.testing.assert_array_equal(seq.view_count, merged.view_count)
        np.testing.assert_allclose(
            seq.opacity_contribution, merged.opacity_contribution, atol=1e-12
        )
