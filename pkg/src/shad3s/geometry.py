"""CSG scene graphs over a finite set of Euclidean solids.

Scenes are immutable trees of transformed primitives combined with boolean
ops.  Two independent evaluation paths are provided on purpose:
``signed_distance`` (analytic SDFs, the renderer substrate) and ``contains``
(direct boolean point-membership), so one can cross-check the other.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

PRIMITIVE_KINDS = ("sphere", "box", "cylinder", "cone", "torus")
OP_KINDS = ("union", "difference", "intersection")

# param names per primitive kind, in canonical serialization order
_PARAM_ORDER = {
    "sphere": ("r",),
    "box": ("hx", "hy", "hz"),
    "cylinder": ("r", "h"),
    "cone": ("r", "h"),
    "torus": ("R", "r"),
}


class SceneError(ValueError):
    """Semantic violation in a scene (bad parameter, too many solids)."""


class SceneParseError(SceneError):
    """Syntax error in the textual scene grammar."""

    def __init__(self, message, line=1, column=1):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Primitive:
    kind: str
    params: tuple  # floats, ordered per _PARAM_ORDER[kind]

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise SceneError(f"unknown primitive kind {self.kind!r}")
        names = _PARAM_ORDER[self.kind]
        if len(self.params) != len(names):
            raise SceneError(
                f"{self.kind} expects params {names}, got {len(self.params)}")
        for name, v in zip(names, self.params):
            if not v > 0:
                raise SceneError(f"{self.kind}.{name} must be > 0, got {v}")
        if self.kind == "torus":
            major, minor = self.params
            if not minor < major:
                raise SceneError(
                    f"torus minor radius {minor} must be < major radius {major}")

    def bounding_radius(self):
        """Radius of a sphere (centred at the local origin) enclosing the solid."""
        p = self.params
        if self.kind == "sphere":
            return p[0]
        if self.kind == "box":
            return math.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
        if self.kind in ("cylinder", "cone"):
            return math.sqrt(p[0] ** 2 + (p[1] / 2) ** 2)
        return p[0] + p[1]  # torus


@dataclass(frozen=True)
class Transform:
    """Rigid transform plus uniform scale: p_world = s * R(q) p_local + t."""

    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (1.0, 0.0, 0.0, 0.0)  # quaternion (w, x, y, z)
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise SceneError(f"scale must be > 0, got {self.scale}")
        n = math.sqrt(sum(c * c for c in self.rotation))
        if not math.isclose(n, 1.0, rel_tol=1e-6):
            raise SceneError("rotation quaternion must be unit norm")

    def matrix(self):
        w, x, y, z = self.rotation
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def to_local(self, points):
        """Map world points of shape (..., 3) into the primitive's local frame."""
        rot = self.matrix()
        p = np.asarray(points, dtype=float) - np.asarray(self.translation)
        return (p @ rot) / self.scale  # p @ R == R.T applied row-wise


@dataclass(frozen=True)
class Leaf:
    primitive: Primitive
    transform: Transform = field(default_factory=Transform)


@dataclass(frozen=True)
class Op:
    kind: str
    left: "CsgNode"
    right: "CsgNode"

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise SceneError(f"unknown op kind {self.kind!r}")


CsgNode = Leaf | Op


def leaf_count(node):
    if isinstance(node, Leaf):
        return 1
    return leaf_count(node.left) + leaf_count(node.right)


def iter_leaves(node):
    if isinstance(node, Leaf):
        yield node
    else:
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)


@dataclass(frozen=True)
class CsgScene:
    root: CsgNode
    ground_plane: float = 0.0
    seed: int = 0
    max_solids: int = 6

    def __post_init__(self):
        if not 1 <= self.max_solids <= 6:
            raise SceneError(f"max_solids must be in [1, 6], got {self.max_solids}")
        n = leaf_count(self.root)
        if n > self.max_solids:
            raise SceneError(f"scene has {n} leaves, max_solids={self.max_solids}")

    def bounding_center(self):
        """Center of a conservative bounding sphere (mean of leaf centroids)."""
        centers = np.array([l.transform.translation for l in iter_leaves(self.root)])
        return centers.mean(axis=0)

    def bounding_radius(self):
        c = self.bounding_center()
        r = 0.0
        for l in iter_leaves(self.root):
            d = np.linalg.norm(np.asarray(l.transform.translation) - c)
            r = max(r, d + l.primitive.bounding_radius() * l.transform.scale)
        return r


# ---------------------------------------------------------------------------
# Signed distance evaluation
# ---------------------------------------------------------------------------

def _sdf_primitive(prim, p):
    """Exact SDF of an untransformed primitive; p has shape (..., 3)."""
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if prim.kind == "sphere":
        return np.linalg.norm(p, axis=-1) - prim.params[0]
    if prim.kind == "box":
        b = np.asarray(prim.params)
        q = np.abs(p) - b
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside
    if prim.kind == "cylinder":
        r, h = prim.params
        dxz = np.hypot(x, z) - r
        dy = np.abs(y) - h / 2
        d = np.stack([dxz, dy], axis=-1)
        return (np.minimum(np.max(d, axis=-1), 0.0)
                + np.linalg.norm(np.maximum(d, 0.0), axis=-1))
    if prim.kind == "cone":
        # capped cone with apex up: base radius r at y=-h/2, radius 0 at y=+h/2
        r, h = prim.params
        hh = h / 2
        qx = np.hypot(x, z)
        qy = y
        k2 = np.array([0.0 - r, 2.0 * hh])
        ca_x = qx - np.minimum(qx, np.where(qy < 0.0, r, 0.0))
        ca_y = np.abs(qy) - hh
        t = np.clip(((0.0 - qx) * k2[0] + (hh - qy) * k2[1]) / (k2 @ k2), 0.0, 1.0)
        cb_x = qx - 0.0 + k2[0] * t
        cb_y = qy - hh + k2[1] * t
        s = np.where((cb_x < 0.0) & (ca_y < 0.0), -1.0, 1.0)
        d2 = np.minimum(ca_x ** 2 + ca_y ** 2, cb_x ** 2 + cb_y ** 2)
        return s * np.sqrt(d2)
    if prim.kind == "torus":
        major, minor = prim.params
        q = np.hypot(np.hypot(x, z) - major, y)
        return q - minor
    raise SceneError(f"unknown primitive kind {prim.kind!r}")


def _sdf_node(node, points):
    if isinstance(node, Leaf):
        local = node.transform.to_local(points)
        return _sdf_primitive(node.primitive, local) * node.transform.scale
    a = _sdf_node(node.left, points)
    b = _sdf_node(node.right, points)
    if node.kind == "union":
        return np.minimum(a, b)
    if node.kind == "intersection":
        return np.maximum(a, b)
    return np.maximum(a, -b)  # difference (standard bound)


def signed_distance(scene, points):
    """Signed distance from ``points`` (..., 3) to the scene surface.

    Negative inside, positive outside.  Exact per primitive; boolean
    combinations use the standard min/max bounds.
    """
    points = np.asarray(points, dtype=float)
    scalar = points.ndim == 1
    d = _sdf_node(scene.root, points if not scalar else points[None])
    return float(d[0]) if scalar else d


# ---------------------------------------------------------------------------
# Direct boolean membership (independent of the SDF path)
# ---------------------------------------------------------------------------

def _inside_primitive(prim, p):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if prim.kind == "sphere":
        return x * x + y * y + z * z < prim.params[0] ** 2
    if prim.kind == "box":
        hx, hy, hz = prim.params
        return (np.abs(x) < hx) & (np.abs(y) < hy) & (np.abs(z) < hz)
    if prim.kind == "cylinder":
        r, h = prim.params
        return (x * x + z * z < r * r) & (np.abs(y) < h / 2)
    if prim.kind == "cone":
        r, h = prim.params
        frac = (h / 2 - y) / h  # 1 at base, 0 at apex
        return (np.abs(y) < h / 2) & (x * x + z * z < (r * frac) ** 2)
    major, minor = prim.params
    return (np.hypot(x, z) - major) ** 2 + y * y < minor ** 2


def _contains_node(node, points):
    if isinstance(node, Leaf):
        return _inside_primitive(node.primitive, node.transform.to_local(points))
    a = _contains_node(node.left, points)
    b = _contains_node(node.right, points)
    if node.kind == "union":
        return a | b
    if node.kind == "intersection":
        return a & b
    return a & ~b  # difference


def contains(scene, points):
    """Boolean point-membership test for ``points`` (..., 3)."""
    points = np.asarray(points, dtype=float)
    scalar = points.ndim == 1
    m = _contains_node(scene.root, points if not scalar else points[None])
    return bool(m[0]) if scalar else m


# ---------------------------------------------------------------------------
# Procedural sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    op_probs: tuple = (0.5, 0.3, 0.2)  # union, difference, intersection
    placement_radius: float = 2.0
    scale_range: tuple = (0.5, 1.5)
    max_clearance: float = 0.5
    scene_radius: float = 4.0
    max_retries: int = 16


_DEFAULT_SAMPLER = SamplerConfig()


def _sample_primitive(rng):
    kind = PRIMITIVE_KINDS[rng.integers(len(PRIMITIVE_KINDS))]
    if kind == "sphere":
        params = (float(rng.uniform(0.4, 1.0)),)
    elif kind == "box":
        params = tuple(float(rng.uniform(0.3, 0.9)) for _ in range(3))
    elif kind in ("cylinder", "cone"):
        params = (float(rng.uniform(0.3, 0.8)), float(rng.uniform(0.6, 1.6)))
    else:  # torus
        major = float(rng.uniform(0.5, 1.0))
        params = (major, float(rng.uniform(0.1, 0.45)) * major)
    return Primitive(kind, params)


def _random_quaternion(rng):
    # Shoemake's uniform quaternion sampling
    u1, u2, u3 = rng.uniform(size=3)
    a, b = math.sqrt(1 - u1), math.sqrt(u1)
    q = (a * math.sin(2 * math.pi * u2), a * math.cos(2 * math.pi * u2),
         b * math.sin(2 * math.pi * u3), b * math.cos(2 * math.pi * u3))
    return q


def _sample_leaf(rng, config):
    prim = _sample_primitive(rng)
    scale = float(rng.uniform(*config.scale_range))
    angle = rng.uniform(0, 2 * math.pi)
    radius = config.placement_radius * math.sqrt(rng.uniform())
    cx, cz = radius * math.cos(angle), radius * math.sin(angle)
    rot = _random_quaternion(rng)
    clearance = float(rng.uniform(0, config.max_clearance))
    cy = prim.bounding_radius() * scale + clearance
    return Leaf(prim, Transform((float(cx), float(cy), float(cz)), rot, scale))


def _node_nonempty(node, rng):
    # coarse Monte-Carlo emptiness check over the node's bounding region
    leaves = list(iter_leaves(node))
    centers = np.array([l.transform.translation for l in leaves])
    radii = np.array([l.primitive.bounding_radius() * l.transform.scale
                      for l in leaves])
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    pts = rng.uniform(lo, hi, size=(4096, 3))
    return bool(_contains_node(node, pts).any())


def sample_scene(seed, max_solids, config=_DEFAULT_SAMPLER):
    """Procedurally sample a scene; deterministic in (seed, max_solids, config)."""
    if not 1 <= max_solids <= 6:
        raise SceneError(f"max_solids must be in [1, 6], got {max_solids}")
    rng = np.random.default_rng([seed, max_solids])
    check_rng = np.random.default_rng([seed, max_solids, 0xC5])
    n = int(rng.integers(1, max_solids + 1))
    node = _sample_leaf(rng, config)
    for _ in range(n - 1):
        op = OP_KINDS[rng.choice(len(OP_KINDS), p=config.op_probs)]
        candidate = Op(op, node, _sample_leaf(rng, config))
        ok = _node_nonempty(candidate, check_rng)
        retries = 0
        while not ok and retries < config.max_retries:
            candidate = Op(op, node, _sample_leaf(rng, config))
            ok = _node_nonempty(candidate, check_rng)
            retries += 1
        if ok:
            node = candidate
        # else: drop the degenerate op, keep the left child
    scene = CsgScene(node, ground_plane=0.0, seed=seed, max_solids=max_solids)
    if scene.bounding_radius() > config.scene_radius:
        # shrink toward origin so the scene fits the configured radius
        factor = config.scene_radius / scene.bounding_radius()
        node = _rescale_node(node, factor)
        scene = CsgScene(node, ground_plane=0.0, seed=seed, max_solids=max_solids)
    return scene


def _rescale_node(node, factor):
    if isinstance(node, Leaf):
        t = node.transform
        tx, ty, tz = (c * factor for c in t.translation)
        return Leaf(node.primitive,
                    Transform((tx, ty, tz), t.rotation, t.scale * factor))
    return Op(node.kind, _rescale_node(node.left, factor),
              _rescale_node(node.right, factor))


# ---------------------------------------------------------------------------
# Textual grammar
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def serialize_node(node):
    if isinstance(node, Op):
        return f"{node.kind}({serialize_node(node.left)}, {serialize_node(node.right)})"
    prim, t = node.primitive, node.transform
    kv = ", ".join(f"{name}={_fmt(v)}"
                   for name, v in zip(_PARAM_ORDER[prim.kind], prim.params))
    s = f"{prim.kind}({kv})"
    if t != Transform():
        tx, ty, tz = t.translation
        qw, qx, qy, qz = t.rotation
        s += (f" @t({_fmt(tx)},{_fmt(ty)},{_fmt(tz)})"
              f" r({_fmt(qw)},{_fmt(qx)},{_fmt(qy)},{_fmt(qz)})"
              f" s({_fmt(t.scale)})")
    return s


def serialize_scene(scene):
    return serialize_node(scene.root) + "\n"


_TOKEN = re.compile(r"\s*([A-Za-z]+|@[a-z]|[(),=]|-?\d+\.?\d*(?:[eE][+-]?\d+)?)")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def _loc(self, pos):
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, msg, pos=None):
        line, col = self._loc(self.pos if pos is None else pos)
        raise SceneParseError(msg, line, col)

    def peek(self):
        m = _TOKEN.match(self.text, self.pos)
        return m.group(1) if m else None

    def next(self):
        m = _TOKEN.match(self.text, self.pos)
        if not m:
            self.error("unexpected end of input" if self.pos >= len(self.text)
                       else f"unexpected character {self.text[self.pos]!r}")
        self.pos = m.end()
        return m.group(1)

    def expect(self, tok):
        got = self.next()
        if got != tok:
            self.error(f"expected {tok!r}, got {got!r}")
        return got

    def number(self):
        tok = self.next()
        try:
            return float(tok)
        except ValueError:
            self.error(f"expected a number, got {tok!r}")

    def node(self):
        name = self.next()
        if name in OP_KINDS:
            self.expect("(")
            left = self.node()
            self.expect(",")
            right = self.node()
            self.expect(")")
            return Op(name, left, right)
        if name not in PRIMITIVE_KINDS:
            self.error(f"unknown solid or op {name!r}")
        self.expect("(")
        kv = {}
        while True:
            key = self.next()
            self.expect("=")
            kv[key] = self.number()
            if self.peek() == ",":
                self.next()
            else:
                break
        self.expect(")")
        names = _PARAM_ORDER[name]
        missing = [n for n in names if n not in kv]
        extra = [k for k in kv if k not in names]
        if missing or extra:
            self.error(f"{name} takes params {names}; "
                       f"missing={missing} unknown={extra}")
        prim = Primitive(name, tuple(kv[n] for n in names))
        transform = Transform()
        if self.peek() == "@t":
            self.next()
            t = self.numbers(3)
            self.expect("r")
            q = self.numbers(4)
            self.expect("s")
            scale, = self.numbers(1)
            transform = Transform(t, q, scale)
        return Leaf(prim, transform)

    def numbers(self, count):
        self.expect("(")
        vals = [self.number()]
        for _ in range(count - 1):
            self.expect(",")
            vals.append(self.number())
        self.expect(")")
        return tuple(vals)


def parse_scene(text, ground_plane=0.0, seed=0, max_solids=None):
    """Parse the textual scene grammar into a ``CsgScene``.

    Syntax errors raise ``SceneParseError`` with line/column; semantic
    violations (negative sizes, leaf count > 6) raise ``SceneError``.
    """
    parser = _Parser(text)
    try:
        root = parser.node()
    except SceneError:
        raise
    trailing = parser.peek()
    if trailing is not None:
        parser.error(f"trailing input {trailing!r}")
    n = leaf_count(root)
    if n > 6:
        raise SceneError(f"scene has {n} solids; at most 6 allowed")
    if max_solids is None:
        max_solids = n
    return CsgScene(root, ground_plane=ground_plane, seed=seed,
                    max_solids=max_solids)
