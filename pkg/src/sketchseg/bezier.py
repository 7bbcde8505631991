"""Cubic Bezier strokes: evaluation, path sampling, least-squares fitting,
control-point perturbation and rasterization."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateComponent, DomainError, SingularFit
from .raster import BinaryMask
from .skeleton import PixelComponent

__all__ = [
    "CubicBezier",
    "PerturbParams",
    "evaluate",
    "sample_component",
    "trace_path",
    "chord_length_params",
    "fit",
    "displacement_magnitude",
    "perturb",
    "render",
    "draw",
]

Point = tuple[float, float]


def _point(p) -> Point:
    x, y = (float(v) for v in p)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"control point must be finite, got {p!r}")
    return (x, y)


@dataclass(frozen=True)
class CubicBezier:
    p0: Point
    p1: Point
    p2: Point
    p3: Point

    def __post_init__(self):
        for name in ("p0", "p1", "p2", "p3"):
            object.__setattr__(self, name, _point(getattr(self, name)))

    @classmethod
    def from_array(cls, ctrl) -> "CubicBezier":
        ctrl = np.asarray(ctrl, dtype=float).reshape(4, 2)
        return cls(*(tuple(row) for row in ctrl))

    @property
    def control_points(self) -> np.ndarray:
        return np.array([self.p0, self.p1, self.p2, self.p3], dtype=float)

    def __call__(self, t):
        return evaluate(self, t)


@dataclass(frozen=True)
class PerturbParams:
    seed: int
    C: int = 10
    K_step: float = 10.0
    num_variants: int = 5

    def __post_init__(self):
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if self.K_step < 0:
            raise ValueError("K_step must be >= 0")
        if self.num_variants < 1:
            raise ValueError("num_variants must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _bernstein(t: np.ndarray) -> np.ndarray:
    s = 1.0 - t
    return np.stack([s**3, 3 * t * s**2, 3 * t**2 * s, t**3], axis=-1)


def evaluate(curve: CubicBezier, t):
    """Point(s) on the curve at parameter ``t`` (scalar or array) in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0) | (t_arr > 1)) or not np.all(np.isfinite(t_arr)):
        raise DomainError("t must lie in [0, 1]")
    pts = _bernstein(t_arr) @ curve.control_points
    if t_arr.ndim == 0:
        return (float(pts[0]), float(pts[1]))
    return pts


_STEPS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


def _bfs(start, nodes):
    parent = {start: None}
    order = [start]
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in _STEPS:
            nb = (x + dx, y + dy)
            if nb in nodes and nb not in parent:
                parent[nb] = (x, y)
                order.append(nb)
                queue.append(nb)
    return parent, order


def trace_path(comp: PixelComponent) -> list[tuple[int, int]]:
    """Longest geodesic walk through a (thin) component.

    Starts from the first row-major endpoint (a pixel with one neighbour), or
    the first pixel for closed loops, then runs BFS twice to find a
    pseudo-diameter of the 8-connectivity graph.
    """
    nodes = {(int(x), int(y)) for x, y in comp.pixels}
    ordered = [(int(x), int(y)) for x, y in comp.pixels]
    start = ordered[0]
    for x, y in ordered:
        if sum((x + dx, y + dy) in nodes for dx, dy in _STEPS) == 1:
            start = (x, y)
            break
    _, order = _bfs(start, nodes)
    far = order[-1]
    parent, order = _bfs(far, nodes)
    node = order[-1]
    path = []
    while node is not None:
        path.append(node)
        node = parent[node]
    return path


def sample_component(comp: PixelComponent, interval: int = 10) -> np.ndarray:
    """Every ``interval``-th pixel along the traced path, both ends included.

    Returns an ``(n, 2)`` array of (x, y) points, ``n >= 2``.
    """
    if interval < 1:
        raise ValueError("interval must be positive")
    path = trace_path(comp)
    if len(path) < 2:
        raise DegenerateComponent("cannot trace a path of two or more pixels")
    idx = list(range(0, len(path), interval))
    if idx[-1] != len(path) - 1:
        idx.append(len(path) - 1)
    return np.array([path[i] for i in idx], dtype=float)


def chord_length_params(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    if np.any(seg == 0):
        raise DomainError("consecutive points must be distinct")
    t = np.concatenate([[0.0], np.cumsum(seg)])
    return t / t[-1]


def _solve_inner(pts: np.ndarray, t: np.ndarray):
    """Least-squares p1, p2 for fixed parameters, or None if rank deficient."""
    basis = _bernstein(t)
    A = basis[:, 1:3]
    rhs = pts - np.outer(basis[:, 0], pts[0]) - np.outer(basis[:, 3], pts[-1])
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= sv[0] * 1e-10:
        return None
    inner, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return inner


def _polish(pts: np.ndarray, t0: np.ndarray, max_nfev: int):
    """Joint Levenberg-Marquardt over (p1, p2, interior t). Returns (ctrl, max residual)."""
    from scipy.optimize import least_squares

    n = len(pts)
    inner = _solve_inner(pts, t0)
    if inner is None:
        return None, math.inf
    x0 = np.concatenate([inner.ravel(), t0[1:-1]])
    idx = np.arange(1, n - 1)

    def unpack(x):
        t = np.concatenate([[0.0], x[4:], [1.0]])
        return t, np.vstack([pts[0], x[:4].reshape(2, 2), pts[-1]])

    def residual(x):
        t, ctrl = unpack(x)
        return (_bernstein(t) @ ctrl - pts).ravel()

    def jacobian(x):
        t, ctrl = unpack(x)
        basis = _bernstein(t)
        J = np.zeros((2 * n, len(x)))
        J[0::2, 0] = J[1::2, 1] = basis[:, 1]
        J[0::2, 2] = J[1::2, 3] = basis[:, 2]
        s = 1 - t
        d = (
            3 * (s**2)[:, None] * (ctrl[1] - ctrl[0])
            + 6 * (s * t)[:, None] * (ctrl[2] - ctrl[1])
            + 3 * (t**2)[:, None] * (ctrl[3] - ctrl[2])
        )
        J[2 * idx, 3 + idx] = d[idx, 0]
        J[2 * idx + 1, 3 + idx] = d[idx, 1]
        return J

    sol = least_squares(
        residual, x0, jac=jacobian, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
    )
    t, ctrl = unpack(sol.x)
    if np.any(t < 0) or np.any(t > 1):
        return None, math.inf
    return ctrl, float(np.abs(sol.fun).max())


def _grid_starts(pts: np.ndarray, cells: int, samples: int, keep: int):
    """Parameter guesses from exact cubics through two anchor points.

    Every (ta < tb) cell centre defines the unique cubic through the pinned
    ends and the points at 1/3 and 2/3 of the list; the best-scoring curves
    (worst point-to-curve distance) seed the polish with projected parameters.
    """
    n = len(pts)
    ia, ib = n // 3, (2 * n) // 3
    g = (np.arange(cells) + 0.5) / cells
    ta, tb = np.meshgrid(g, g, indexing="ij")
    upper = ta < tb
    ta, tb = ta[upper], tb[upper]
    Ba, Bb = _bernstein(ta), _bernstein(tb)
    p0, p3 = pts[0], pts[-1]
    ra = pts[ia] - np.outer(Ba[:, 0], p0) - np.outer(Ba[:, 3], p3)
    rb = pts[ib] - np.outer(Bb[:, 0], p0) - np.outer(Bb[:, 3], p3)
    det = (Ba[:, 1] * Bb[:, 2] - Ba[:, 2] * Bb[:, 1])[:, None]
    p1 = (ra * Bb[:, 2:3] - rb * Ba[:, 2:3]) / det
    p2 = (Ba[:, 1:2] * rb - Bb[:, 1:2] * ra) / det
    td = np.linspace(0.0, 1.0, samples)
    Bd = _bernstein(td)
    curves = (
        Bd[None, :, 0, None] * p0
        + Bd[None, :, 1, None] * p1[:, None, :]
        + Bd[None, :, 2, None] * p2[:, None, :]
        + Bd[None, :, 3, None] * p3
    )
    dist = ((curves[:, :, None, :] - pts[None, None, :, :]) ** 2).sum(axis=3)
    proj = td[dist.argmin(axis=1)]
    # sampled distances are too coarse on fast curves; Newton-project first
    ctrl = np.stack([np.broadcast_to(p0, p1.shape), p1, p2, np.broadcast_to(p3, p1.shape)], axis=1)
    d1 = 3 * np.diff(ctrl, axis=1)
    d2 = 2 * np.diff(d1, axis=1)
    for _ in range(6):
        pos = np.einsum("kmj,kjd->kmd", _bernstein(proj.ravel()).reshape(*proj.shape, 4), ctrl) - pts
        s, u = 1 - proj, proj
        vel = (s**2)[..., None] * d1[:, None, 0] + (2 * s * u)[..., None] * d1[:, None, 1] + (u**2)[..., None] * d1[:, None, 2]
        acc = s[..., None] * d2[:, None, 0] + u[..., None] * d2[:, None, 1]
        g = (pos * vel).sum(-1)
        h = (vel * vel).sum(-1) + (pos * acc).sum(-1)
        step = np.where(h > 0, g / np.where(h > 0, h, 1.0), 0.0)
        proj = np.clip(proj - step, 0.0, 1.0)
    pos = np.einsum("kmj,kjd->kmd", _bernstein(proj.ravel()).reshape(*proj.shape, 4), ctrl) - pts
    score = np.minimum(dist.min(axis=1), (pos**2).sum(-1)).max(axis=1)
    for k in np.argsort(score, kind="stable")[:keep]:
        t = np.sort(proj[k])
        t[0], t[-1] = 0.0, 1.0
        if np.all(np.diff(t) > 0):
            yield t


def fit(points, strict: bool = False, refine: bool = False) -> CubicBezier:
    """Least-squares cubic through ``points`` with both endpoints pinned.

    Interior control points minimise the squared distance to the points at
    chord-length parameters. When the 2x2 normal system is rank deficient
    (e.g. two or three points), p1 and p2 fall back to the 1/3 and 2/3 chord
    positions unless ``strict`` is set, in which case ``SingularFit`` is raised.

    With ``refine=True`` the chord-length solution seeds a joint
    Levenberg-Marquardt solve over control points and parameters; if that
    does not reach an exact fit, grid-seeded restarts are tried and the best
    result is kept. Points lying exactly on a cubic are then recovered to
    rounding error instead of being limited by the chord-length guess.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    p0, p3 = pts[0], pts[-1]
    t = chord_length_params(pts)
    inner = _solve_inner(pts, t)
    if inner is None:
        if strict:
            raise SingularFit("rank-deficient normal equations")
        return CubicBezier(tuple(p0), tuple(p0 + (p3 - p0) / 3), tuple(p0 + 2 * (p3 - p0) / 3), tuple(p3))
    if not refine:
        return CubicBezier(tuple(p0), tuple(inner[0]), tuple(inner[1]), tuple(p3))

    ctrl = np.vstack([p0, inner, p3])
    best = (ctrl, float(np.abs(_bernstein(t) @ ctrl - pts).max()))
    exact = 1e-9 * max(1.0, float(np.abs(pts).max()))

    def consider(start, nfev):
        nonlocal best
        cand = _polish(pts, start, nfev)
        if cand[1] < best[1]:
            best = cand

    consider(t, 100)
    for cells, samples in ((32, 128), (96, 256)):
        if best[1] <= exact:
            break
        for start in _grid_starts(pts, cells, samples, keep=8):
            consider(start, 200)
            if best[1] <= exact:
                break
    return CubicBezier.from_array(best[0])


def displacement_magnitude(row_count: int, params: PerturbParams) -> float:
    """floor(row_count / C) * K_step."""
    if row_count < 0:
        raise ValueError("row_count must be nonnegative")
    return (int(row_count) // params.C) * float(params.K_step)


def perturb(curve: CubicBezier, theta: float, rng: np.random.Generator) -> CubicBezier:
    """Add isotropic Gaussian noise (std ``theta`` per axis) to p1 and p2.

    Four standard normals are drawn regardless of ``theta`` so that streams
    stay aligned across magnitudes.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    z = rng.standard_normal((2, 2))
    if theta == 0:
        return curve
    p1 = np.asarray(curve.p1) + theta * z[0]
    p2 = np.asarray(curve.p2) + theta * z[1]
    return CubicBezier(curve.p0, tuple(p1), tuple(p2), curve.p3)


def flatten(curve: CubicBezier) -> np.ndarray:
    """Sample the curve so consecutive points are at most 1 px apart.

    |B'(t)| <= 3 * longest control-polygon leg, so that many uniform steps
    bound every arc piece by one pixel.
    """
    ctrl = curve.control_points
    legs = np.hypot(*np.diff(ctrl, axis=0).T)
    n = max(1, math.ceil(3 * legs.max()))
    return evaluate(curve, np.linspace(0.0, 1.0, n + 1))


def draw(curve: CubicBezier, bits: np.ndarray, thickness: int = 3) -> None:
    """In-place variant of :func:`render` on a writable ``(H, W)`` array."""
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    h, w = bits.shape
    pts = np.floor(flatten(curve) + 0.5).astype(np.int64)
    r = (thickness - 1) // 2
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            xs = pts[:, 0] + dx
            ys = pts[:, 1] + dy
            ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            bits[ys[ok], xs[ok]] = 1


def render(curve: CubicBezier, canvas: BinaryMask, thickness: int = 3) -> BinaryMask:
    """Union of ``canvas`` with the stroked curve.

    The curve is flattened to a polyline with sub-pixel steps, each vertex is
    rounded to its pixel and stamped with a square pen of Chebyshev radius
    ``(thickness - 1) // 2``. Pixels off the canvas are dropped.
    """
    out = canvas.bits.copy()
    draw(curve, out, thickness)
    return BinaryMask(out)
