import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from motionforge.synth import SceneConfig, generate_scene, write_clip


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.PCG64(1234))


@pytest.fixture
def clip_factory(tmp_path):
    """Write a synthetic clip to disk and return (clip_dir, frames, annotation)."""

    def make(seed=5, camera_family="pan", object_count=1, object_family="linear",
             n_frames=17, size=64):
        cfg = SceneConfig(seed=seed, n_frames=n_frames, width=size, height=size,
                          camera_family=camera_family, object_count=object_count,
                          object_family=object_family)
        frames, ann = generate_scene(cfg)
        clip_dir = tmp_path / f"clip_s{seed}_{camera_family}_{object_count}"
        write_clip(frames, ann, str(clip_dir))
        return str(clip_dir), frames, ann

    return make
