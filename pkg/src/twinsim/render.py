"""Software rasterizer producing low-resolution camera views of a world.

Collision spheres are drawn as depth-shaded disks over the table plane with a
z-buffer; no lighting model beyond that. Cameras use pinhole intrinsics with
+z forward and +y down in the camera frame, and are either fixed in the world
or mounted on a robot link through a constant extrinsic pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from twinsim.mathutils import quat_mul, quat_normalize, quat_rotate, quat_to_matrix
from twinsim.physics.state import Pose, UnknownBodyError, WorldState

BACKGROUND = np.array([0.11, 0.12, 0.14])
TABLE_COLOR = np.array([0.78, 0.77, 0.74])


class RenderError(Exception):
    pass


@dataclass
class Camera:
    """Pinhole camera; ``mount`` is a world pose, or a link-frame extrinsic
    when ``mount_link`` names a body."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    mount: Pose
    mount_link: str | None = None

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise RenderError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise RenderError("image size must be positive")


class Image:
    """Row-major 8-bit RGB buffer."""

    __slots__ = ("width", "height", "data")

    def __init__(self, width: int, height: int, data: bytes):
        if len(data) != width * height * 3:
            raise RenderError(
                f"buffer holds {len(data)} bytes, expected {width * height * 3}"
            )
        self.width = width
        self.height = height
        self.data = bytes(data)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        a = np.asarray(arr, dtype=np.uint8)
        h, w = a.shape[0], a.shape[1]
        return cls(w, h, a.tobytes())

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(
            self.height, self.width, 3
        )

    def to_ppm(self) -> bytes:
        return b"P6\n%d %d\n255\n" % (self.width, self.height) + self.data

    def write_ppm(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_ppm())

    @classmethod
    def from_ppm(cls, blob: bytes) -> "Image":
        parts = blob.split(b"\n", 3)
        if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
            raise RenderError("not a binary 8-bit PPM")
        w, h = (int(v) for v in parts[1].split())
        return cls(w, h, parts[3][: w * h * 3])

    def __eq__(self, other):
        return (
            isinstance(other, Image)
            and self.width == other.width
            and self.height == other.height
            and self.data == other.data
        )


def look_at_pose(eye, target, up) -> Pose:
    """Camera-to-world pose with +z pointing from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n == 0.0:
        raise RenderError("camera eye coincides with its look-at target")
    fwd = fwd / n
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise RenderError("camera up vector is parallel to the view direction")
    right = right / rn
    down = np.cross(fwd, right)
    # columns are the camera axes expressed in the outer frame
    m = np.column_stack([right, down, fwd])
    return Pose(eye, _quat_from_matrix(m))


def _quat_from_matrix(m: np.ndarray) -> np.ndarray:
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                      (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                      0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return quat_normalize(q)


def camera_from_config(cfg: dict) -> Camera:
    w = int(cfg.get("width", 64))
    h = int(cfg.get("height", 64))
    fov = math.radians(float(cfg.get("fov_deg", 60.0)))
    fx = 0.5 * w / math.tan(0.5 * fov)
    up = cfg.get("up", [0.0, 1.0, 0.0])
    if "attach_to" in cfg:
        mount = look_at_pose(cfg["eye_offset"], cfg.get("look_at_offset", [0, 0, 0]), up)
        link = cfg["attach_to"]
    else:
        mount = look_at_pose(cfg["eye"], cfg.get("look_at", [0, 0, 0]), up)
        link = None
    return Camera(fx=fx, fy=fx, cx=0.5 * (w - 1), cy=0.5 * (h - 1),
                  width=w, height=h, mount=mount, mount_link=link)


def scene_cameras(model) -> dict:
    return {name: camera_from_config(cfg) for name, cfg in model.cameras.items()}


def resolve_camera_pose(camera: Camera, world: WorldState) -> Pose:
    if camera.mount_link is None:
        return camera.mount.copy()
    model = world.model
    if camera.mount_link not in model.body_index:
        raise UnknownBodyError(f"camera mount link {camera.mount_link!r} not in scene")
    i = model.body_index[camera.mount_link]
    q = world.quat[i]
    return Pose(
        world.pos[i] + quat_rotate(q, camera.mount.position),
        quat_mul(q, camera.mount.orientation),
    )


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def render(world: WorldState, camera: Camera) -> Image:
    model = world.model
    cam = resolve_camera_pose(camera, world)
    r_wc = quat_to_matrix(cam.orientation)  # camera -> world
    r_cw = r_wc.T
    eye = cam.position
    w, h = camera.width, camera.height

    color = np.empty((h, w, 3))
    color[:] = BACKGROUND
    depth = np.full((h, w), np.inf)

    # table plane: one ray per pixel against z = plane_z, clipped to the square top
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    dirs_cam = np.stack(
        [(us - camera.cx) / camera.fx, (vs - camera.cy) / camera.fy,
         np.ones_like(us)], axis=-1)
    dirs_w = dirs_cam @ r_wc.T
    dz = dirs_w[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (model.plane_z - eye[2]) / dz
    px = eye[0] + s * dirs_w[..., 0]
    py = eye[1] + s * dirs_w[..., 1]
    ext = model.plane_extent
    hit = (dz != 0.0) & (s > 0.0) & (np.abs(px) <= ext) & (np.abs(py) <= ext)
    depth[hit] = s[hit]  # dirs_cam z-component is 1, so s is camera-frame depth
    color[hit] = TABLE_COLOR

    # spheres as shaded disks with an approximate spherical depth bulge
    for b in range(model.num_bodies):
        sel = model.body_sphere_slice(b)
        if sel.size == 0:
            continue
        rb = quat_to_matrix(world.quat[b])
        centers_w = world.pos[b] + model.sphere_local[sel] @ rb.T
        centers_c = (centers_w - eye) @ r_cw.T
        for k, sc in zip(sel, centers_c):
            z = sc[2]
            r = model.sphere_radius[k]
            if z <= r:
                continue
            u0 = camera.cx + camera.fx * sc[0] / z
            v0 = camera.cy + camera.fy * sc[1] / z
            rad = camera.fx * r / z
            lo_u = max(0, int(math.floor(u0 - rad)))
            hi_u = min(w - 1, int(math.ceil(u0 + rad)))
            lo_v = max(0, int(math.floor(v0 - rad)))
            hi_v = min(h - 1, int(math.ceil(v0 + rad)))
            if lo_u > hi_u or lo_v > hi_v:
                continue
            gu, gv = np.meshgrid(np.arange(lo_u, hi_u + 1, dtype=np.float64),
                                 np.arange(lo_v, hi_v + 1, dtype=np.float64))
            d2 = ((gu - u0) ** 2 + (gv - v0) ** 2) / (rad * rad)
            inside = d2 <= 1.0
            if not inside.any():
                continue
            bulge = np.sqrt(np.where(inside, 1.0 - d2, 0.0))
            zpix = z - r * bulge
            patch_d = depth[lo_v:hi_v + 1, lo_u:hi_u + 1]
            write = inside & (zpix < patch_d)
            shade = (0.45 + 0.55 * bulge)[write]
            patch_d[write] = zpix[write]
            patch_c = color[lo_v:hi_v + 1, lo_u:hi_u + 1]
            patch_c[write] = shade[:, None] * model.sphere_color[k]

    return Image.from_array(
        _round_half_up(np.clip(color, 0.0, 1.0) * 255.0).astype(np.uint8)
    )


def downsample(image: Image, w2: int, h2: int) -> Image:
    if w2 <= 0 or h2 <= 0 or w2 > image.width or h2 > image.height:
        raise RenderError(
            f"cannot downsample {image.width}x{image.height} to {w2}x{h2}"
        )
    arr = image.to_array().astype(np.float64)
    wh = _box_weights(image.height, h2)
    ww = _box_weights(image.width, w2)
    out = np.einsum("ij,jkc,lk->ilc", wh, arr, ww)
    return Image.from_array(_round_half_up(out).astype(np.uint8))


def _box_weights(n: int, m: int) -> np.ndarray:
    """Row i averages source pixels overlapping [i*n/m, (i+1)*n/m)."""
    scale = n / m
    wts = np.zeros((m, n))
    for i in range(m):
        a = i * scale
        b = a + scale
        j0 = int(math.floor(a))
        j1 = min(n, int(math.ceil(b)))
        for j in range(j0, j1):
            wts[i, j] = (min(b, j + 1.0) - max(a, j)) / scale
    return wts
