"""Metric tests: alignment, camera errors, box recovery, IoU, evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import iou_oracle, similarity_fit_oracle

from motionforge.conditioning import BoxSequence2D
from motionforge.errors import ShapeError
from motionforge.geometry import (CameraIntrinsics, CameraPose, CameraTrajectory,
                                  rot_x, rot_y, rot_z)
from motionforge.metrics import (MetricsReport, TrajectoryPair, background_shift_error,
                                 box_iou, box_iou_sequence, cam_rot_err, cam_trans_err,
                                 commanded_shifts, estimate_shift, evaluate,
                                 recover_boxes, snap_box_to_pixels, umeyama_align,
                                 write_reports)
from motionforge.synth import SceneConfig, generate_scene, spec_from_clip, write_clip

INTR = CameraIntrinsics(70.4, 70.4, 31.5, 31.5, 64, 64)


def _trajectory(centers, rotations=None):
    rotations = rotations or [np.eye(3)] * len(centers)
    return CameraTrajectory([CameraPose(r, c) for r, c in zip(rotations, centers)], INTR)


def _random_centers(rng, n=10):
    return np.cumsum(rng.uniform(-0.5, 0.5, size=(n, 3)), axis=0)


class TestUmeyama:
    def test_identical(self, rng):
        pts = _random_centers(rng)
        sim = umeyama_align(pts, pts)
        assert abs(sim.scale - 1) < 1e-9
        np.testing.assert_allclose(sim.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(sim.translation, 0, atol=1e-9)

    def test_scaled_rotated_recovered(self, rng):
        ref = _random_centers(rng)
        est = 2.0 * ref @ rot_z(np.pi / 2).T
        sim = umeyama_align(est, ref)
        assert abs(sim.scale - 0.5) < 1e-9
        np.testing.assert_allclose(sim.rotation, rot_z(-np.pi / 2), atol=1e-9)
        residual = np.linalg.norm(sim.apply(est) - ref, axis=1).max()
        assert residual <= 1e-6

    def test_constant_offset_pure_translation(self, rng):
        ref = _random_centers(rng)
        est = ref + np.array([3.0, -1.0, 2.0])
        sim = umeyama_align(est, ref)
        assert abs(sim.scale - 1) < 1e-9
        np.testing.assert_allclose(sim.rotation, np.eye(3), atol=1e-8)
        np.testing.assert_allclose(sim.translation, [-3, 1, -2], atol=1e-8)

    def test_degenerate_falls_back_with_flag(self):
        est = np.tile([1.0, 2.0, 3.0], (5, 1))
        ref = np.tile([0.0, 0.0, 0.0], (5, 1))
        sim = umeyama_align(est, ref)
        assert sim.degenerate
        np.testing.assert_allclose(sim.apply(est), ref, atol=1e-12)

    def test_matches_numeric_optimizer_on_noisy_case(self, rng):
        ref = _random_centers(rng, 12)
        est = 1.7 * (ref + 0.03 * rng.standard_normal(ref.shape)) @ rot_y(0.4).T + [1, 2, 3]
        sim = umeyama_align(est, ref)
        ours_ss = 0.5 * ((sim.apply(est) - ref) ** 2).sum()
        oracle_ss, _ = similarity_fit_oracle(est, ref)
        assert ours_ss <= oracle_ss + 1e-9  # closed form attains the LM optimum


class TestCameraErrors:
    def test_identical_zero(self, rng):
        t = _trajectory(_random_centers(rng))
        pair = TrajectoryPair(t, t)
        assert cam_trans_err(pair) <= 1e-12
        assert cam_rot_err(pair) <= 1e-9

    def test_uniform_scale_absorbed(self, rng):
        centers = _random_centers(rng)
        pair = TrajectoryPair(_trajectory(centers * 2.0), _trajectory(centers))
        assert cam_trans_err(pair) <= 1e-9

    def test_one_frame_offset_matches_numeric_oracle(self, rng):
        ref = _random_centers(rng, 10)
        est = ref.copy()
        est[4] += [1.0, 0, 0]
        # canonicalization shifts both to start at the origin first
        ref0, est0 = ref - ref[0], est - est[0]
        _, expected_mean = similarity_fit_oracle(est0, ref0)
        got = cam_trans_err(TrajectoryPair(_trajectory(est), _trajectory(ref)))
        assert abs(got - expected_mean) <= 1e-5

    def test_similarity_invariance(self, rng):
        centers = _random_centers(rng)
        ref = _trajectory(centers)
        transformed = 1.7 * centers @ rot_y(0.8).T + np.array([4.0, 5.0, 6.0])
        rots = [rot_y(0.8) for _ in centers]
        est = _trajectory(transformed, rots)
        assert cam_trans_err(TrajectoryPair(est, ref)) <= 1e-6

    def test_rot_err_constant_offset_quarter_turn(self, rng):
        centers = _random_centers(rng, 6)
        ref_rots = [np.eye(3)] + [rot_y(0.05 * j) for j in range(1, 6)]
        est_rots = [ref_rots[0]] + [r @ rot_z(np.pi / 2) for r in ref_rots[1:]]
        pair = TrajectoryPair(_trajectory(centers, est_rots), _trajectory(centers, ref_rots))
        assert abs(cam_rot_err(pair) - np.pi / 2) <= 1e-6

    def test_rot_err_single_frame_zero(self):
        t = _trajectory([np.zeros(3)])
        assert cam_rot_err(TrajectoryPair(t, t)) == 0.0

    def test_rot_err_invariant_under_world_rotation(self, rng):
        centers = _random_centers(rng, 6)
        ref_rots = [np.eye(3)] + [rot_y(0.1 * j) for j in range(1, 6)]
        est_rots = [r @ rot_x(0.2) for r in ref_rots]  # constant estimator bias
        base = cam_rot_err(TrajectoryPair(_trajectory(centers, est_rots),
                                          _trajectory(centers, ref_rots)))
        w = rot_z(1.1)
        ref_w = [w @ r for r in ref_rots]
        est_w = [w @ r for r in est_rots]
        rotated = cam_rot_err(TrajectoryPair(
            _trajectory([w @ c for c in centers], est_w),
            _trajectory([w @ c for c in centers], ref_w)))
        assert abs(base - rotated) <= 1e-9

    def test_frame_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            TrajectoryPair(_trajectory(_random_centers(rng, 4)),
                           _trajectory(_random_centers(rng, 5)))


class TestBoxIoU:
    def test_identical_sequences(self):
        seq = BoxSequence2D(0, np.array([[1, 1, 5, 5]] * 3), np.ones(3, dtype=bool))
        assert box_iou_sequence(seq, seq) == 1.0

    def test_disjoint(self):
        a = BoxSequence2D(0, np.array([[0, 0, 1, 1]] * 2), np.ones(2, dtype=bool))
        b = BoxSequence2D(0, np.array([[5, 5, 6, 6]] * 2), np.ones(2, dtype=bool))
        assert box_iou_sequence(a, b) == 0.0

    def test_one_seventh(self):
        a = BoxSequence2D(0, np.array([[0, 0, 2, 2]]), np.array([True]))
        b = BoxSequence2D(0, np.array([[1, 1, 3, 3]]), np.array([True]))
        assert abs(box_iou_sequence(a, b) - 1 / 7) <= 1e-9

    def test_gt_invisible_frames_skipped(self):
        pred = BoxSequence2D(0, np.array([[0, 0, 2, 2]] * 2), np.array([True, True]))
        gt = BoxSequence2D(0, np.array([[0, 0, 2, 2]] * 2), np.array([True, False]))
        assert box_iou_sequence(pred, gt) == 1.0

    def test_pred_missing_scores_zero(self):
        pred = BoxSequence2D(0, np.array([[0, 0, 2, 2]] * 2), np.array([True, False]))
        gt = BoxSequence2D(0, np.array([[0, 0, 2, 2]] * 2), np.array([True, True]))
        assert box_iou_sequence(pred, gt) == 0.5

    @given(st.lists(st.floats(-20, 20), min_size=8, max_size=8),
           st.floats(-30, 30), st.floats(-30, 30))
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_translation_invariant(self, vals, tx, ty):
        ax0, ay0, aw, ah, bx0, by0, bw, bh = vals
        a = (ax0, ay0, ax0 + abs(aw) + 0.1, ay0 + abs(ah) + 0.1)
        b = (bx0, by0, bx0 + abs(bw) + 0.1, by0 + abs(bh) + 0.1)
        assert abs(box_iou(a, b) - box_iou(b, a)) <= 1e-12
        at = (a[0] + tx, a[1] + ty, a[2] + tx, a[3] + ty)
        bt = (b[0] + tx, b[1] + ty, b[2] + tx, b[3] + ty)
        assert abs(box_iou(a, b) - box_iou(at, bt)) <= 1e-9
        assert abs(box_iou(a, b) - iou_oracle(a, b)) <= 1e-12


class TestRecoverBoxes:
    def test_pure_red_block_exact(self):
        video = np.full((1, 64, 64, 3), 0.5, dtype=np.float32)
        video[0, 20:30, 40:50] = (1.0, 0.0, 0.0)
        seq = recover_boxes(video, [(1.0, 0.0, 0.0)])[0]
        assert seq.visibility[0]
        np.testing.assert_array_equal(seq.boxes[0], [40, 20, 49, 29])

    def test_no_matching_pixels_invisible(self):
        video = np.full((2, 64, 64, 3), 0.5, dtype=np.float32)
        seq = recover_boxes(video, [(1.0, 0.0, 0.0)])[0]
        assert not seq.visibility.any()

    def test_noisy_rendering_within_one_pixel(self, rng):
        video = np.full((1, 64, 64, 3), 0.5, dtype=np.float32)
        video[0, 20:30, 40:50] = (0.9, 0.1, 0.1)
        video += rng.uniform(-8 / 255, 8 / 255, size=video.shape).astype(np.float32)
        seq = recover_boxes(video, [(0.9, 0.1, 0.1)])[0]
        assert seq.visibility[0]
        assert np.abs(seq.boxes[0] - np.array([40, 20, 49, 29])).max() <= 1.0

    def test_snap_box(self):
        assert snap_box_to_pixels((10.2, 3.9, 20.7, 9.1)) == (11.0, 4.0, 20.0, 9.0)
        assert snap_box_to_pixels((5.4, 5.4, 5.9, 9.0)) is None


class TestEvaluate:
    def _clip(self, tmp_path, seed=17, **kw):
        cfg = SceneConfig(seed=seed, **kw)
        frames, ann = generate_scene(cfg)
        clip_dir = str(tmp_path / f"clip{seed}")
        write_clip(frames, ann, clip_dir)
        return clip_dir, frames, ann

    def test_gt_video_self_consistency(self, tmp_path):
        for seed, fam in ((17, "pan"), (18, "orbit"), (19, "static")):
            clip_dir, frames, ann = self._clip(tmp_path, seed=seed, camera_family=fam,
                                               object_count=2, object_family="linear")
            spec = spec_from_clip(clip_dir)
            report = evaluate(spec, frames, ann, clip_id=f"c{seed}")
            assert report.box_iou is not None and report.box_iou >= 0.98
            assert report.cam_trans_err <= 1e-9
            assert report.cam_rot_err <= 1e-9

    def test_shuffled_frames_score_lower(self, tmp_path):
        clip_dir, frames, ann = self._clip(tmp_path, seed=20, camera_family="static",
                                           object_count=1, object_family="linear")
        spec = spec_from_clip(clip_dir)
        base = evaluate(spec, frames, ann).box_iou
        shuffled = frames[::-1].copy()
        worse = evaluate(spec, shuffled, ann).box_iou
        assert worse < base

    def test_camera_only_fields(self, tmp_path):
        clip_dir, frames, ann = self._clip(tmp_path, seed=21, camera_family="pan",
                                           object_count=0, object_family="static")
        spec = spec_from_clip(clip_dir)
        report = evaluate(spec, frames, ann)
        assert report.box_iou is None
        assert report.cam_trans_err is not None

    def test_no_annotation_camera_not_applicable(self, tmp_path):
        clip_dir, frames, _ = self._clip(tmp_path, seed=22, object_count=1)
        spec = spec_from_clip(clip_dir)
        report = evaluate(spec, frames, None)
        assert report.cam_trans_err is None and report.cam_rot_err is None

    def test_report_json_schema(self, tmp_path):
        rep = MetricsReport("clipA", 0.1, 0.02, 0.8, {0: 0.8})
        d = rep.to_dict()
        assert set(d) == {"clip_id", "cam_trans_err", "cam_rot_err", "box_iou",
                          "fid", "fvd", "clipsim"}
        assert d["fid"] is None and d["fvd"] is None and d["clipsim"] is None
        agg = write_reports([rep], str(tmp_path / "reports"))
        assert (tmp_path / "reports" / "clipA.json").exists()
        assert (tmp_path / "reports" / "aggregate.csv").exists()
        assert abs(agg["box_iou"] - 0.8) < 1e-12


class TestBackgroundShift:
    def test_estimate_shift_recovers_known_roll(self, rng):
        ref = rng.uniform(0, 1, size=(64, 64, 3)).astype(np.float32)
        shifted = np.roll(ref, (3, -5), axis=(0, 1))  # dy=3, dx=-5
        dx, dy = estimate_shift(shifted, ref, max_shift=8)
        assert (dx, dy) == (-5, 3)

    def test_commanded_shift_matches_rendered_pan(self):
        frames, ann = generate_scene(SceneConfig(seed=25, camera_family="pan",
                                                 object_count=0, object_family="static"))
        shifts = commanded_shifts(ann.depth0, CameraTrajectory(ann.poses, ann.intrinsics))
        realized = [estimate_shift(frames[j], frames[0], 12) for j in range(ann.n_frames)]
        err = np.abs(np.array(realized) - shifts).max()
        # the tilted plane spreads per-pixel shifts slightly around the median
        assert err <= 2.0

    def test_background_shift_error_zero_for_gt(self):
        frames, ann = generate_scene(SceneConfig(seed=26, camera_family="pan",
                                                 object_count=0, object_family="static"))
        shifts = commanded_shifts(ann.depth0, CameraTrajectory(ann.poses, ann.intrinsics))
        err = background_shift_error(frames, frames[0], shifts)
        assert err <= 1.5
