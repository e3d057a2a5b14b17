"""Rasterizer checks against pinhole-projection arithmetic."""

import math

import numpy as np
import pytest

from twinsim.mathutils import quat_from_yaw, quat_rotate
from twinsim.physics import UnknownBodyError, assemble_model, build_scene, make_world
from twinsim.physics.state import Pose
from twinsim.render import (
    BACKGROUND,
    Camera,
    Image,
    RenderError,
    camera_from_config,
    downsample,
    look_at_pose,
    render,
    resolve_camera_pose,
    scene_cameras,
)


def _world_with_spheres(spheres, colors=None, pose=((0, 0, 0.2), (1, 0, 0, 0))):
    colors = colors or [(0.9, 0.1, 0.1)] * len(spheres)
    bodies = [("ball", 0.2, np.eye(3) * 1e-5, 0.0, 0.0, 0.0, 0, spheres, colors)]
    m = assemble_model(bodies, [], None)
    return make_world(m, poses={"ball": (list(pose[0]), list(pose[1]))})


def _empty_world():
    return make_world(assemble_model([], [], None))


def _down_camera(z=0.5, w=64, h=64, fov=60.0):
    cfg = {"eye": [0.0, 0.0, z], "look_at": [0.0, 0.0, 0.0],
           "up": [0.0, 1.0, 0.0], "fov_deg": fov, "width": w, "height": h}
    return camera_from_config(cfg)


def test_world_fixed_camera_pose_is_its_own():
    cam = _down_camera()
    w = _empty_world()
    p = resolve_camera_pose(cam, w)
    np.testing.assert_array_equal(p.position, cam.mount.position)
    np.testing.assert_array_equal(p.orientation, cam.mount.orientation)


def test_link_mounted_identity_extrinsic_equals_link_pose():
    w = _world_with_spheres([((0.0, 0.0, 0.0), 0.02)],
                            pose=((0.1, -0.2, 0.3), quat_from_yaw(0.7)))
    cam = Camera(fx=50, fy=50, cx=31.5, cy=31.5, width=64, height=64,
                 mount=Pose(np.zeros(3), [1, 0, 0, 0]), mount_link="ball")
    p = resolve_camera_pose(cam, w)
    np.testing.assert_allclose(p.position, [0.1, -0.2, 0.3])
    np.testing.assert_allclose(p.orientation, quat_from_yaw(0.7))


def test_link_mounted_offset_rotates_with_link():
    q = quat_from_yaw(1.1)
    w = _world_with_spheres([((0.0, 0.0, 0.0), 0.02)], pose=((0.1, -0.2, 0.3), q))
    cam = Camera(fx=50, fy=50, cx=31.5, cy=31.5, width=64, height=64,
                 mount=Pose(np.array([0.1, 0.0, 0.0]), [1, 0, 0, 0]),
                 mount_link="ball")
    p = resolve_camera_pose(cam, w)
    np.testing.assert_allclose(
        p.position, np.array([0.1, -0.2, 0.3]) + quat_rotate(q, np.array([0.1, 0, 0])),
        atol=1e-15,
    )


def test_unknown_mount_link_rejected():
    cam = Camera(fx=50, fy=50, cx=31.5, cy=31.5, width=64, height=64,
                 mount=Pose(np.zeros(3), [1, 0, 0, 0]), mount_link="nope")
    with pytest.raises(UnknownBodyError):
        resolve_camera_pose(cam, _empty_world())


def test_empty_world_away_from_table_is_uniform_background():
    cfg = {"eye": [0.0, 0.0, 0.5], "look_at": [0.0, 0.0, 1.0],
           "up": [0.0, 1.0, 0.0], "fov_deg": 60.0, "width": 32, "height": 24}
    img = render(_empty_world(), camera_from_config(cfg))
    arr = img.to_array()
    bg = np.floor(BACKGROUND * 255.0 + 0.5).astype(np.uint8)
    assert (arr == bg).all()


def test_on_axis_sphere_radius_matches_pinhole_projection():
    r, depth_z = 0.03, 0.5
    w = _world_with_spheres([((0.0, 0.0, 0.0), r)], pose=((0.0, 0.0, 0.0), (1, 0, 0, 0)))
    cam = _down_camera(z=depth_z, w=96, h=96)
    arr = render(w, cam).to_array()
    red = arr[:, :, 0].astype(int) > arr[:, :, 2].astype(int) + 30
    vs, us = np.nonzero(red)
    assert len(us) > 0
    measured = 0.5 * (us.max() - us.min() + 1)
    assert measured == pytest.approx(cam.fx * r / (depth_z - 0.0), abs=1.0)
    # disk is centered on the principal point
    assert abs(0.5 * (us.max() + us.min()) - cam.cx) <= 1.0
    assert abs(0.5 * (vs.max() + vs.min()) - cam.cy) <= 1.0


def test_nearer_sphere_occludes_farther():
    spheres = [((0.0, 0.0, 0.1), 0.02), ((0.0, 0.0, 0.0), 0.02)]
    colors = [(0.1, 0.9, 0.1), (0.9, 0.1, 0.1)]
    w = _world_with_spheres(spheres, colors)
    arr = render(w, _down_camera()).to_array()
    c = arr[32, 32].astype(int)
    assert c[1] > c[0] + 30  # the higher (nearer to a downward camera) is green


def test_rendering_is_pure():
    w = build_scene()
    cams = scene_cameras(w.model)
    a = render(w, cams["overhead"])
    b = render(w, cams["overhead"])
    assert a == b and a.data == b.data


def test_wrist_camera_sees_robot_motion_static_camera_does_not():
    w = build_scene()
    cams = scene_cameras(w.model)
    before_static = render(w, cams["overhead"])
    before_wrist = render(w, cams["wrist"])
    w2 = w.copy()
    i = w2.model.body_index["pusher"]
    j = w2.model.body_index["carriage"]
    for k in (i, j):
        w2.pos[k] = w2.pos[k] + np.array([0.05, 0.04, 0.0])
    after_wrist = render(w2, cams["wrist"])
    assert after_wrist != before_wrist
    # a static camera watching only the unchanged block region
    cfg = {"eye": [-0.05, -0.05, 0.3], "look_at": [-0.05, -0.05, 0.0],
           "up": [0.0, 1.0, 0.0], "fov_deg": 25.0, "width": 48, "height": 48}
    tight = camera_from_config(cfg)
    assert render(w2, tight) == render(w, tight)
    assert before_static.width == w.model.cameras["overhead"]["width"]


def test_every_scene_body_contributes_pixels_overhead():
    w = build_scene()
    cam = scene_cameras(w.model)["overhead"]
    full = render(w, cam).to_array()
    for bid in w.model.body_ids:
        sunk = w.copy()
        i = sunk.model.body_index[bid]
        sunk.pos[i] = sunk.pos[i] + np.array([0.0, 0.0, -1.0])
        without = render(sunk, cam).to_array()
        assert (full != without).any(), f"{bid} contributed no pixels"


def test_downsample_same_size_is_identity():
    w = build_scene()
    img = render(w, scene_cameras(w.model)["overhead"])
    assert downsample(img, img.width, img.height) == img


def test_downsample_uniform_stays_uniform():
    img = Image.from_array(np.full((30, 40, 3), 77, dtype=np.uint8))
    out = downsample(img, 7, 5)
    assert out.width == 7 and out.height == 5
    assert (out.to_array() == 77).all()


def test_downsample_checkerboard_rounds_half_up():
    arr = np.zeros((2, 2, 3), dtype=np.uint8)
    arr[0, 0] = arr[1, 1] = 255
    out = downsample(Image.from_array(arr), 1, 1)
    assert (out.to_array() == 128).all()


def test_downsample_rejects_growth_and_zero():
    img = Image.from_array(np.zeros((4, 4, 3), dtype=np.uint8))
    for w2, h2 in [(8, 4), (4, 8), (0, 4), (4, 0)]:
        with pytest.raises(RenderError):
            downsample(img, w2, h2)


def test_ppm_round_trip_and_header():
    w = build_scene()
    img = render(w, scene_cameras(w.model)["overhead"])
    blob = img.to_ppm()
    assert blob.startswith(b"P6\n64 64\n255\n")
    assert len(blob) == len(b"P6\n64 64\n255\n") + 64 * 64 * 3
    assert Image.from_ppm(blob) == img


def test_image_validates_buffer_length():
    with pytest.raises(RenderError):
        Image(4, 4, b"\x00" * 10)


def test_bad_camera_parameters_rejected():
    with pytest.raises(RenderError):
        Camera(fx=-1, fy=1, cx=0, cy=0, width=4, height=4,
               mount=Pose(np.zeros(3), [1, 0, 0, 0]))
    with pytest.raises(RenderError):
        look_at_pose([0, 0, 1], [0, 0, 1], [0, 1, 0])
    with pytest.raises(RenderError):
        look_at_pose([0, 0, 1], [0, 0, 0], [0, 0, 1])
