"""Synthetic scene generator tests: determinism, annotation consistency, manifests."""

import json
import os

import numpy as np
import pytest

from motionforge.conditioning import fit_boxes, project_trajectory, ObjectTrajectory3D
from motionforge.errors import SpecValidationError
from motionforge.geometry import CameraPose, CameraTrajectory, splat_render, unproject_depth
from motionforge.imgio import read_png
from motionforge.synth import (SceneConfig, annotation_from_dict, annotation_to_dict,
                               generate_scene, make_dataset, read_manifest, spec_from_clip,
                               write_manifest)


class TestGenerateScene:
    def test_static_scene_all_frames_identical(self):
        frames, ann = generate_scene(SceneConfig(seed=1, camera_family="static",
                                                 object_count=0, object_family="static"))
        for j in range(1, frames.shape[0]):
            np.testing.assert_array_equal(frames[j], frames[0])

    def test_same_seed_byte_identical(self):
        cfg = SceneConfig(seed=42, camera_family="orbit", object_count=2,
                          object_family="circular")
        f1, a1 = generate_scene(cfg)
        f2, a2 = generate_scene(cfg)
        np.testing.assert_array_equal(f1, f2)
        for o1, o2 in zip(a1.objects, a2.objects):
            np.testing.assert_array_equal(o1.points, o2.points)
            np.testing.assert_array_equal(o1.masks, o2.masks)
        assert a1.caption == a2.caption

    def test_linear_motion_boxes_translate_monotonically(self):
        frames, ann = generate_scene(SceneConfig(seed=7, camera_family="static",
                                                 object_count=1, object_family="linear"))
        obj = ann.objects[0]
        assert obj.visibility.all()
        cx = (obj.boxes[:, 0] + obj.boxes[:, 2]) / 2
        cy = (obj.boxes[:, 1] + obj.boxes[:, 3]) / 2
        dx, dy = cx[-1] - cx[0], cy[-1] - cy[0]
        track = np.diff(cx) if abs(dx) >= abs(dy) else np.diff(cy)
        sign = np.sign(dx if abs(dx) >= abs(dy) else dy)
        assert (sign * track >= -1.0).all()  # integer mask boxes may stall 1px

    def test_boxes_consistent_with_projected_points(self):
        frames, ann = generate_scene(SceneConfig(seed=9, camera_family="pan",
                                                 object_count=2, object_family="linear"))
        cam = CameraTrajectory(ann.poses, ann.intrinsics)
        for obj in ann.objects:
            uv, valid = project_trajectory(ObjectTrajectory3D(obj.object_id, obj.points), cam)
            fitted = fit_boxes(uv, valid, ann.intrinsics, padding_px=0.0)
            for j in range(ann.n_frames):
                if not (obj.visibility[j] and fitted.visibility[j]):
                    continue
                assert np.abs(fitted.boxes[j] - obj.boxes[j]).max() <= 2.0

    def test_points_land_inside_masks(self):
        # projecting GT points with GT poses lands in the (1px-dilated) GT mask
        # for >= 99% of visible points
        total, inside = 0, 0
        for seed in (3, 4, 5):
            _, ann = generate_scene(SceneConfig(seed=seed, camera_family="random-smooth",
                                                object_count=2, object_family="random-smooth"))
            cam = CameraTrajectory(ann.poses, ann.intrinsics)
            for obj in ann.objects:
                uv, valid = project_trajectory(ObjectTrajectory3D(obj.object_id, obj.points),
                                               cam)
                for j in range(ann.n_frames):
                    mask = obj.masks[j]
                    dilated = np.zeros_like(mask)
                    for dy in (-1, 0, 1):  # 3x3 dilation absorbs pixel rounding
                        for dx in (-1, 0, 1):
                            dilated[max(0, dy):64 + min(0, dy), max(0, dx):64 + min(0, dx)] |= \
                                mask[max(0, -dy):64 + min(0, -dy), max(0, -dx):64 + min(0, -dx)]
                    for p in range(uv.shape[1]):
                        if not valid[j, p]:
                            continue
                        u = int(np.floor(uv[j, p, 0] + 0.5))
                        v = int(np.floor(uv[j, p, 1] + 0.5))
                        if not (0 <= u < 64 and 0 <= v < 64):
                            continue
                        total += 1
                        inside += bool(dilated[v, u])
        assert total > 0 and inside / total >= 0.99

    def test_depth_closes_loop_with_geometry(self):
        # unproject frame-1 depth, re-render from the reference pose: exact on
        # valid pixels with radius-0 splats
        frames, ann = generate_scene(SceneConfig(seed=13, camera_family="dolly",
                                                 object_count=1, object_family="static"))
        cloud = unproject_depth(ann.depth0, ann.intrinsics, CameraPose.identity(),
                                frames[0])
        img, mask = splat_render(cloud, ann.intrinsics, CameraPose.identity(),
                                 point_radius_px=0)
        assert mask.all()
        assert np.abs(img[mask] - frames[0][mask]).max() <= 1 / 255

    def test_caption_mentions_every_label(self):
        for seed in (21, 22):
            _, ann = generate_scene(SceneConfig(seed=seed, object_count=3,
                                                object_family="linear"))
            for obj in ann.objects:
                assert obj.label in ann.caption

    def test_annotation_n_matches(self):
        frames, ann = generate_scene(SceneConfig(seed=2, n_frames=9))
        assert frames.shape[0] == 9 and ann.n_frames == 9
        for obj in ann.objects:
            assert obj.points.shape == (9, 9, 3)


class TestManifest:
    def test_round_trip(self, tmp_path):
        _, ann = generate_scene(SceneConfig(seed=31, object_count=2))
        path = str(tmp_path / "annotation.json")
        write_manifest(ann, path)
        loaded = read_manifest(path)
        assert loaded.caption == ann.caption
        np.testing.assert_array_equal(loaded.depth0, ann.depth0)
        for a, b in zip(ann.objects, loaded.objects):
            np.testing.assert_array_equal(a.points, b.points)
            np.testing.assert_array_equal(a.boxes, b.boxes)
            np.testing.assert_array_equal(a.masks, b.masks)
        for a, b in zip(ann.poses, loaded.poses):
            np.testing.assert_array_equal(a.rotation, b.rotation)
            np.testing.assert_array_equal(a.translation, b.translation)

    def test_missing_depth_field_rejected(self):
        _, ann = generate_scene(SceneConfig(seed=32))
        data = annotation_to_dict(ann)
        del data["depth_map"]
        with pytest.raises(SpecValidationError, match="depth_map"):
            annotation_from_dict(data, None)

    def test_unknown_version_rejected(self):
        _, ann = generate_scene(SceneConfig(seed=33))
        data = annotation_to_dict(ann)
        data["version"] = "rc-9"
        with pytest.raises(SpecValidationError, match="version"):
            annotation_from_dict(data, None)

    def test_extra_fields_preserved(self, tmp_path):
        _, ann = generate_scene(SceneConfig(seed=34))
        data = annotation_to_dict(ann)
        data["curator_note"] = "hand checked"
        loaded = annotation_from_dict(data, ann.depth0)
        assert loaded.extra["curator_note"] == "hand checked"
        assert annotation_to_dict(loaded)["curator_note"] == "hand checked"


class TestMakeDataset:
    def test_single_clip_and_index(self, tmp_path):
        out = str(tmp_path / "data")
        index = make_dataset(1, base_seed=5, out_dir=out)
        assert len(index) == 1
        clip = os.path.join(out, index[0]["id"])
        assert os.path.exists(os.path.join(clip, "annotation.json"))
        assert os.path.exists(os.path.join(clip, "caption.txt"))
        assert os.path.exists(os.path.join(clip, "depth0.pfm"))
        assert os.path.exists(os.path.join(clip, "frames", "016.png"))
        with open(os.path.join(out, "index.json")) as fh:
            assert len(json.load(fh)["clips"]) == 1

    def test_rerun_is_idempotent(self, tmp_path):
        out = str(tmp_path / "data")
        make_dataset(2, base_seed=6, out_dir=out)
        frame = os.path.join(out, "clip_00000", "frames", "000.png")
        stamp = os.path.getmtime(frame)
        blob = open(os.path.join(out, "index.json"), "rb").read()
        make_dataset(2, base_seed=6, out_dir=out)
        assert os.path.getmtime(frame) == stamp  # not rewritten
        assert open(os.path.join(out, "index.json"), "rb").read() == blob

    def test_spec_from_clip(self, tmp_path):
        out = str(tmp_path / "data")
        make_dataset(1, base_seed=8, out_dir=out)
        spec = spec_from_clip(os.path.join(out, "clip_00000"))
        assert spec.num_frames == 17
        assert os.path.exists(spec.reference_image)
        assert os.path.exists(spec.depth_map)
        ref = read_png(spec.reference_image)
        assert ref.shape == (64, 64, 3)
