"""NPR raytracer: sphere-traced diffuse renders, threshold masks, ground
shadows, contour extraction, the canonical illumination hint, and the final
hatch compositing.

All operations are deterministic functions of their arguments and work on
numpy arrays in [0, 1] (grayscale) or bool (masks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.morphology import thin

from .geometry import signed_distance

DEFAULT_SIZE = 256

# sphere-trace parameters: robustness over speed
MAX_STEPS = 256
EPS_FACTOR = 1e-4


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    azimuth: float  # degrees in [0, 360)
    elevation: float  # degrees in [10, 80]
    distance: float = 8.0
    fov: float = 40.0  # vertical field of view, degrees

    def __post_init__(self):
        if not 10.0 <= self.elevation <= 80.0:
            raise RenderError(f"elevation {self.elevation} outside [10, 80]")
        if not 0.0 < self.fov < 180.0:
            raise RenderError(f"bad fov {self.fov}")


@dataclass(frozen=True)
class LightSpec:
    direction: tuple  # unit vector pointing from the scene toward the light

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if not math.isclose(float(np.linalg.norm(d)), 1.0, rel_tol=1e-6):
            raise RenderError("light direction must be unit norm")
        if d[1] <= 0.05:
            raise RenderError("light must be above the horizon (y > 0.05)")

    @classmethod
    def from_angles(cls, azimuth, elevation):
        """Degrees; elevation must exceed ~2.9 so the horizon invariant holds."""
        az, el = math.radians(azimuth), math.radians(elevation)
        d = (math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el))
        return cls(d)

    def as_array(self):
        return np.asarray(self.direction, dtype=float)


@dataclass
class GBuffer:
    """Output of the diffuse pass; substrate for masks and contours."""

    dif: np.ndarray  # grayscale [0,1], background 0
    coverage: np.ndarray  # bool, object hit
    normals: np.ndarray  # (H, W, 3), zero where no object hit
    depth: np.ndarray  # ray parameter t; +inf where no object hit
    ground_hit: np.ndarray  # bool, primary ray hit the ground plane
    ground_points: np.ndarray  # (H, W, 3) world points, valid where ground_hit
    ray_dirs: np.ndarray  # (H, W, 3) unit primary-ray directions
    miss_fraction: float  # non-convergent marches / total rays


@dataclass
class RenderPlanes:
    """The eight registered planes of one data point."""

    dif: np.ndarray
    hi: np.ndarray
    mid: np.ndarray
    sha: np.ndarray
    shw: np.ndarray
    cnt: np.ndarray
    ill: np.ndarray
    sk: np.ndarray

    def as_dict(self):
        return {"cnt": self.cnt, "ill": self.ill, "hi": self.hi, "mid": self.mid,
                "sha": self.sha, "shw": self.shw, "sk": self.sk, "dif": self.dif}


# ---------------------------------------------------------------------------
# Camera / ray setup
# ---------------------------------------------------------------------------

def _normalize(v):
    return v / np.linalg.norm(v)


def camera_basis(pose, look_at):
    az, el = math.radians(pose.azimuth), math.radians(pose.elevation)
    offset = np.array([math.sin(az) * math.cos(el), math.sin(el),
                       math.cos(az) * math.cos(el)]) * pose.distance
    eye = np.asarray(look_at, dtype=float) + offset
    forward = _normalize(np.asarray(look_at, dtype=float) - eye)
    right = _normalize(np.cross(forward, np.array([0.0, 1.0, 0.0])))
    up = np.cross(right, forward)
    return eye, forward, right, up


def camera_rays(pose, look_at, size):
    """Eye point plus unit ray directions of shape (H, W, 3)."""
    eye, forward, right, up = camera_basis(pose, look_at)
    h = w = size
    half = math.tan(math.radians(pose.fov) / 2)
    ys = (1.0 - (np.arange(h) + 0.5) * 2.0 / h) * half
    xs = ((np.arange(w) + 0.5) * 2.0 / w - 1.0) * half * (w / h)
    dirs = (forward[None, None]
            + xs[None, :, None] * right[None, None]
            + ys[:, None, None] * up[None, None])
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return eye, dirs


def project(pose, look_at, size, points):
    """World points (..., 3) to pixel coordinates (row, col); test helper
    and inverse of camera_rays up to the pinhole model."""
    eye, forward, right, up = camera_basis(pose, look_at)
    p = np.asarray(points, dtype=float) - eye
    zc = p @ forward
    xc = (p @ right) / zc
    yc = (p @ up) / zc
    half = math.tan(math.radians(pose.fov) / 2)
    col = (xc / half + 1.0) * size / 2 - 0.5
    row = (1.0 - yc / half) * size / 2 - 0.5
    return np.stack([row, col], axis=-1)


# ---------------------------------------------------------------------------
# Sphere tracing
# ---------------------------------------------------------------------------

def sphere_trace(sdf, origins, dirs, t_max, eps, max_steps=MAX_STEPS):
    """March rays against an SDF callable.

    origins/dirs are (N, 3); returns (t, hit, stalled) where stalled flags
    rays that ran out of steps while still near the surface.
    """
    n = dirs.shape[0]
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, dirs.shape)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p = origins[idx] + t[idx, None] * dirs[idx]
        d = sdf(p)
        converged = d < eps
        hit[idx[converged]] = True
        active[idx[converged]] = False
        t[idx] += np.maximum(d, eps)
        escaped = t[idx] > t_max
        active[idx[escaped]] = False
    stalled = active
    return t, hit, stalled


def _scene_sdf(scene):
    return lambda p: signed_distance(scene, p)


def _sdf_normals(sdf, points, h):
    grad = np.empty_like(points)
    for axis in range(3):
        off = np.zeros(3)
        off[axis] = h
        grad[:, axis] = sdf(points + off) - sdf(points - off)
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    norm[norm == 0] = 1.0
    return grad / norm


def _occluded(sdf, points, light_dir, eps, t_max, offsets=None):
    """Shadow rays: True where the path from point toward the light hits
    the scene.  ``offsets`` (unit vectors, default the light direction)
    push the origin off the surface to avoid self-intersection."""
    if points.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    if offsets is None:
        offsets = light_dir[None]
    origins = points + offsets * (8 * eps)
    dirs = np.broadcast_to(light_dir, origins.shape)
    _, hit, stalled = sphere_trace(sdf, origins, dirs, t_max, eps)
    return hit | stalled


# ---------------------------------------------------------------------------
# Render passes
# ---------------------------------------------------------------------------

def render_gbuffer(scene, pose, light, size=DEFAULT_SIZE, sdf=None,
                   look_at=None, scene_radius=None):
    """Primary pass: diffuse shading with self-shadowing plus the geometry
    buffers every downstream plane is derived from."""
    if sdf is None:
        sdf = _scene_sdf(scene)
    if look_at is None:
        look_at = scene.bounding_center()
    if scene_radius is None:
        scene_radius = max(scene.bounding_radius(), 1.0)
    eps = EPS_FACTOR * scene_radius
    eye, dirs = camera_rays(pose, look_at, size)
    flat_dirs = dirs.reshape(-1, 3)
    t_max = pose.distance + 2.0 * scene_radius
    t, hit, stalled = sphere_trace(sdf, eye, flat_dirs, t_max, eps)

    ground = scene.ground_plane if scene is not None else 0.0
    dy = flat_dirs[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = (ground - eye[1]) / dy
    ground_valid = (dy < 0) & (t_ground > 0)

    # object wins where the march converged before the ground crossing
    obj = hit & (~ground_valid | (t < np.where(ground_valid, t_ground, np.inf)))
    ground_hit = ground_valid & ~obj

    l = light.as_array()
    dif = np.zeros(flat_dirs.shape[0])
    pts = eye[None] + t[:, None] * flat_dirs
    obj_idx = np.flatnonzero(obj)
    normals = np.zeros_like(flat_dirs)
    if obj_idx.size:
        n = _sdf_normals(sdf, pts[obj_idx], eps)
        normals[obj_idx] = n
        lambert = np.maximum(0.0, n @ l)
        lit = lambert > 0
        shadowed = np.zeros(obj_idx.size, dtype=bool)
        shadowed[lit] = _occluded(sdf, pts[obj_idx][lit], l, eps,
                                  4.0 * scene_radius, offsets=n[lit])
        dif[obj_idx] = lambert * ~shadowed

    depth = np.where(obj, t, np.inf)
    gp = eye[None] + np.where(ground_valid, t_ground, 0.0)[:, None] * flat_dirs
    shape = (size, size)
    return GBuffer(
        dif=dif.reshape(shape),
        coverage=obj.reshape(shape),
        normals=normals.reshape(size, size, 3),
        depth=depth.reshape(shape),
        ground_hit=ground_hit.reshape(shape),
        ground_points=gp.reshape(size, size, 3),
        ray_dirs=dirs,
        miss_fraction=float(stalled.sum()) / flat_dirs.shape[0],
    )


def render_diffuse(scene, pose, light, size=DEFAULT_SIZE):
    """Diffuse grayscale image, object coverage mask, and normal/depth buffers."""
    g = render_gbuffer(scene, pose, light, size)
    return g.dif, g.coverage, g.normals, g.depth


def quantize_masks(dif, coverage, tau_hi=0.75, tau_sha=0.40):
    """Threshold the diffuse pass into highlight/midtone/shade masks.

    The three masks partition the coverage mask exactly.
    """
    hi = coverage & (dif >= tau_hi)
    mid = coverage & (dif >= tau_sha) & (dif < tau_hi)
    sha = coverage & (dif < tau_sha)
    return hi, mid, sha


def render_shadow_mask(scene, pose, light, size=DEFAULT_SIZE, gbuffer=None,
                       no_shadows=False):
    """Binary mask of ground pixels whose path to the light is blocked."""
    if gbuffer is None:
        gbuffer = render_gbuffer(scene, pose, light, size)
    if no_shadows:
        return np.zeros_like(gbuffer.ground_hit)
    sdf = _scene_sdf(scene)
    radius = max(scene.bounding_radius(), 1.0)
    eps = EPS_FACTOR * radius
    shw = np.zeros_like(gbuffer.ground_hit)
    idx = np.flatnonzero(gbuffer.ground_hit.ravel())
    if idx.size:
        pts = gbuffer.ground_points.reshape(-1, 3)[idx]
        occ = _occluded(sdf, pts, light.as_array(), eps, 4.0 * radius)
        shw.ravel()[idx] = occ
    return shw


def extract_contours(depth, normals, coverage, tau_d=0.02, tau_n=25.0,
                     view_dirs=None):
    """Depth/normal discontinuity edges, morphologically thinned to 1 px.

    Silhouettes come from the coverage boundary.  Depth edges use a
    second-difference test so smooth slopes stay clean; crease tests are
    gated away from grazing pixels (``view_dirs``, when given) so the
    silhouette neighbourhood does not thicken into a band.
    """
    h, w = coverage.shape
    sil = np.zeros((h, w), dtype=bool)
    edges = np.zeros((h, w), dtype=bool)
    finite = depth[np.isfinite(depth)]
    depth_range = float(finite.max() - finite.min()) if finite.size else 1.0
    depth_range = max(depth_range, 1e-9)
    cos_tau = math.cos(math.radians(tau_n))
    if view_dirs is not None:
        facing = -np.sum(normals * view_dirs, axis=-1)
        # depth curvature blows up near the rim of curved solids, so the
        # second-difference test needs a wide grazing exclusion; normal
        # creases are stable much closer to the silhouette
        front_d = facing > 0.4
        front_n = facing > 0.1
    else:
        front_d = front_n = np.ones((h, w), dtype=bool)
    d0 = np.where(coverage, depth, 0.0)

    for axis in (0, 1):
        ncov = np.roll(coverage, 1, axis=axis)
        pcov = np.roll(coverage, -1, axis=axis)
        # silhouette: coverage boundary (both directions)
        sil |= coverage & (~ncov | ~pcov)
        interior = coverage & ncov & pcov
        # occlusion jumps: second difference along the scanline
        sec = np.abs(np.roll(d0, 1, axis=axis) + np.roll(d0, -1, axis=axis)
                     - 2 * d0)
        edges |= interior & front_d & (sec > tau_d * depth_range)
        # normal creases; mark the nearer pixel so strokes stay thin
        for shift in (1, -1):
            nnorm = np.roll(normals, shift, axis=axis)
            nfront = np.roll(front_n, shift, axis=axis)
            ndepth = np.roll(d0, shift, axis=axis)
            dot = np.sum(normals * nnorm, axis=-1)
            edges |= (interior & front_n & nfront & (dot < cos_tau)
                      & (d0 <= ndepth))
    # the silhouette chain is already 1 px; thinning the crease band only
    # keeps the boundary exactly on the coverage edge
    out = thin(edges & ~sil) | sil
    out[0, :] = out[-1, :] = out[:, 0] = out[:, -1] = False
    return out


# ---------------------------------------------------------------------------
# Canonical gnomon hint
# ---------------------------------------------------------------------------

GNOMON_POSE = CameraPose(azimuth=0.0, elevation=35.0, distance=4.0, fov=40.0)
_GNOMON_LOOK_AT = (0.0, 0.25, 0.0)
_GNOMON_RADIUS = 1.5


def _sd_triangle_2d(px, py, a, b, c):
    # Quilez 2D triangle SDF, vectorized
    def seg(px, py, p0, p1):
        ex, ey = p1[0] - p0[0], p1[1] - p0[1]
        wx, wy = px - p0[0], py - p0[1]
        t = np.clip((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        dx, dy = wx - ex * t, wy - ey * t
        return dx * dx + dy * dy, wx * ey - wy * ex

    d0, s0 = seg(px, py, a, b)
    d1, s1 = seg(px, py, b, c)
    d2, s2 = seg(px, py, c, a)
    d = np.sqrt(np.minimum(np.minimum(d0, d1), d2))
    inside = (s0 <= 0) & (s1 <= 0) & (s2 <= 0)
    return np.where(inside, -d, d)


def gnomon_sdf(p):
    """Fixed canonical object: disc base plus a right-triangular fin.

    Base: radius 1.0, thickness 0.05, resting on the ground.  Fin: right
    triangle with legs 1.0 along +z and 0.8 along +y, thickness 0.05,
    hypotenuse facing +z.
    """
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    # disc = squat cylinder centred at y = 0.025
    dxz = np.hypot(x, z) - 1.0
    dy = np.abs(y - 0.025) - 0.025
    d2 = np.stack([dxz, dy], axis=-1)
    disc = (np.minimum(np.max(d2, axis=-1), 0.0)
            + np.linalg.norm(np.maximum(d2, 0.0), axis=-1))
    # fin = extruded 2D triangle in the (z, y) plane
    tri = _sd_triangle_2d(z, y, (0.0, 0.0), (1.0, 0.0), (0.0, 0.8))
    wx = np.abs(x) - 0.025
    w = np.stack([tri, wx], axis=-1)
    fin = (np.minimum(np.max(w, axis=-1), 0.0)
           + np.linalg.norm(np.maximum(w, 0.0), axis=-1))
    return np.minimum(disc, fin)


@dataclass(frozen=True)
class _GnomonScene:
    """Stand-in scene so the g-buffer pass can render the canonical object."""

    ground_plane: float = 0.0

    def bounding_center(self):
        return np.asarray(_GNOMON_LOOK_AT)

    def bounding_radius(self):
        return _GNOMON_RADIUS


def render_gnomon_hint(light, size=DEFAULT_SIZE):
    """Grayscale illumination hint: the canonical gnomon under ``light``.

    ``light`` is a LightSpec expressed in the hint frame: +z points from the
    gnomon toward the canonical camera's horizontal position, so azimuth 0
    means light from behind the camera, and mirroring azimuth mirrors the
    image horizontally.
    """
    g = render_gbuffer(_GnomonScene(), GNOMON_POSE, light, size,
                       sdf=gnomon_sdf, look_at=_GNOMON_LOOK_AT,
                       scene_radius=_GNOMON_RADIUS)
    l = light.as_array()
    img = np.ones((size, size))
    # ground: white where lit, dark where the gnomon blocks the light
    idx = np.flatnonzero(g.ground_hit.ravel())
    if idx.size:
        pts = g.ground_points.reshape(-1, 3)[idx]
        near = np.linalg.norm(pts - np.array([0.0, 0.0, 0.0]), axis=-1) < 3.0
        occ = np.zeros(idx.size, dtype=bool)
        occ[near] = _occluded(gnomon_sdf, pts[near], l,
                              EPS_FACTOR * _GNOMON_RADIUS, 6.0)
        img.ravel()[idx[occ]] = 0.3
    img[g.coverage] = 0.1 + 0.9 * g.dif[g.coverage]
    return img


def hint_angles_for(pose, light):
    """Map a world-frame light to (azimuth, elevation) degrees in the hint
    frame of ``pose``'s camera (azimuth 0 = light from behind the camera)."""
    _, forward, right, _ = camera_basis(pose, (0.0, 0.0, 0.0))
    heading = forward.copy()
    heading[1] = 0.0
    heading = _normalize(heading)
    l = light.as_array()
    elevation = math.degrees(math.asin(np.clip(l[1], -1.0, 1.0)))
    azimuth = math.degrees(math.atan2(float(l @ right), float(l @ -heading)))
    return azimuth, elevation


def hint_for_scene_light(pose, light, size=DEFAULT_SIZE):
    az, el = hint_angles_for(pose, light)
    return render_gnomon_hint(LightSpec.from_angles(az, el), size)


# ---------------------------------------------------------------------------
# Hatch compositing
# ---------------------------------------------------------------------------

N_TONES = 6  # cel-shading bins including pure white and pure black


def _tile(texture, shape):
    th, tw = texture.shape
    rows = np.arange(shape[0]) % th
    cols = np.arange(shape[1]) % tw
    return texture[np.ix_(rows, cols)]


def render_hatch(dif, coverage, shw, cnt, crops, background_hatch=False):
    """Composite the final hatch sketch from the shading planes.

    ``crops`` are the 4 tone textures (tone 1 darkest .. tone 4 lightest),
    grayscale in [0, 1].  Object pixels are quantized into 6 bins: bin 5 is
    pure white, bin 0 pure black, bins 1..4 take the matching tone texture,
    tiled in screen space.  Cast shadow takes tone 1; contours composite
    black on top.
    """
    if len(crops) != 4:
        raise RenderError("expected 4 tone crops")
    h, w = dif.shape
    tiles = [_tile(np.asarray(c, dtype=float), (h, w)) for c in crops]
    out = np.ones((h, w))
    if background_hatch:
        out = tiles[2].copy()  # tone 3 everywhere outside object and shadow
    bins = np.clip((dif * N_TONES).astype(int), 0, N_TONES - 1)
    out[coverage & (bins == 0)] = 0.0
    out[coverage & (bins == 5)] = 1.0
    for b in range(1, 5):
        sel = coverage & (bins == b)
        out[sel] = tiles[b - 1][sel]
    shadow = shw & ~coverage
    out[shadow] = tiles[0][shadow]
    out[cnt] = 0.0
    return out


# ---------------------------------------------------------------------------
# Full data-point render
# ---------------------------------------------------------------------------

def render_planes(scene, pose, light, crops, size=DEFAULT_SIZE,
                  background_hatch=False, no_shadows=False):
    """All eight registered planes for one (scene, pose, light, textures)."""
    g = render_gbuffer(scene, pose, light, size)
    hi, mid, sha = quantize_masks(g.dif, g.coverage)
    shw = render_shadow_mask(scene, pose, light, size, gbuffer=g,
                             no_shadows=no_shadows)
    cnt = extract_contours(g.depth, g.normals, g.coverage,
                           view_dirs=g.ray_dirs)
    ill = hint_for_scene_light(pose, light, size)
    sk = render_hatch(g.dif, g.coverage, shw, cnt, crops,
                      background_hatch=background_hatch)
    return RenderPlanes(dif=g.dif, hi=hi, mid=mid, sha=sha, shw=shw,
                        cnt=cnt, ill=ill, sk=sk)
