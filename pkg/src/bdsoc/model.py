"""Domain types: grids, control sets, coefficients and the driving noise.

All coefficient callables are vectorised over samples. With ``M`` samples,
state dimension ``n``, forward noise dimension ``d``, backward noise
dimension ``l`` and control dimension ``k``:

    b(t, x, v)          x: (M, n), v: (M, k)            -> (M, n)
    sigma(t, x, v)                                       -> (M, n, d)
    f(t, x, y, z, v)    y: (M,), z: (M, d)               -> (M,)
    g(t, x, y, z)                                        -> (M, l)
    h(x)                                                 -> (M,)
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t0) or not np.isfinite(self.T):
            raise ValueError("time bounds must be finite")
        if self.t0 < 0:
            raise ValueError("t0 must be non-negative")
        if not self.t0 < self.T:
            raise ValueError(f"need t0 < T, got t0={self.t0}, T={self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.n_steps + 1)
        t[-1] = self.T
        return t

    def time(self, i: int) -> float:
        if not 0 <= i <= self.n_steps:
            raise IndexError(f"time index {i} outside [0, {self.n_steps}]")
        return float(self.times[i])

    def refine(self) -> "TimeGrid":
        """Halve the step. Endpoints are kept exactly."""
        return TimeGrid(self.t0, self.T, 2 * self.n_steps)


@dataclass(frozen=True)
class SpaceGrid:
    """Tensor grid on a box; ``counts[i]`` points along axis ``i``."""

    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(a) for a in np.atleast_1d(self.lower))
        upper = tuple(float(a) for a in np.atleast_1d(self.upper))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (len(lower) == len(upper) == len(counts)):
            raise ValueError("lower, upper and counts must have the same length")
        for lo, hi, c in zip(lower, upper, counts):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("grid bounds must be finite")
            if not lo < hi:
                raise ValueError(f"need lower < upper on every axis, got {lo}, {hi}")
            if c < 2:
                raise ValueError("need at least 2 points per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, dim: int, radius: float, count: int) -> "SpaceGrid":
        return cls((-radius,) * dim, (radius,) * dim, (count,) * dim)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def axes(self) -> list:
        return [np.linspace(lo, hi, c) for lo, hi, c in zip(self.lower, self.upper, self.counts)]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (c - 1) for lo, hi, c in zip(self.lower, self.upper, self.counts)])

    @property
    def points(self) -> np.ndarray:
        """All nodes as an (size, dim) array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def refine(self) -> "SpaceGrid":
        return SpaceGrid(self.lower, self.upper, tuple(2 * c - 1 for c in self.counts))

    def nearest_index(self, x: np.ndarray) -> np.ndarray:
        """Flat index of the nearest node for each row of ``x`` (clipped to the box)."""
        x = np.atleast_2d(x)
        idx = np.zeros(x.shape[0], dtype=np.int64)
        for axis, (lo, h, c) in enumerate(zip(self.lower, self.spacing, self.counts)):
            k = np.clip(np.rint((x[:, axis] - lo) / h), 0, c - 1).astype(np.int64)
            idx = idx * c + k
        return idx

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoidal product weights, shaped like the grid."""
        w = np.ones(())
        for axis, h, c in zip(self.axes, self.spacing, self.counts):
            wa = np.full(c, h)
            wa[0] = wa[-1] = h / 2
            w = np.multiply.outer(w, wa)
        return w


@dataclass(frozen=True)
class ControlSet:
    """Finite stand-in for the compact control set."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("control set must be a non-empty list of vectors")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def take(self, idx) -> np.ndarray:
        return self.points[np.asarray(idx, dtype=np.int64)]


@dataclass(frozen=True)
class CoefficientSet:
    b: Callable
    sigma: Callable
    f: Callable
    g: Callable
    h: Callable
    lip_L: float
    alpha: float
    n: int = 1
    d: int = 1
    l: int = 1
    k: int = 1
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.lip_L > 0:
            raise ValueError(f"lip_L must be positive, got {self.lip_L}")
        for dim in ("n", "d", "l", "k"):
            if getattr(self, dim) < 1:
                raise ValueError(f"dimension {dim} must be >= 1")

    def replace(self, **changes) -> "CoefficientSet":
        return dataclasses.replace(self, **changes)


@dataclass
class ValidationReport:
    ratios: dict
    declared: dict
    passed: dict
    slack: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _finite(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} returned non-finite values at sampled points")
    return arr


def _max_ratio(num, den):
    den = np.asarray(den)
    mask = den > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(num[mask] / den[mask]))


def validate_model(
    model: CoefficientSet,
    sample_budget: int = 4000,
    box: tuple = (-3.0, 3.0),
    controls: Optional[ControlSet] = None,
    t_range: tuple = (0.0, 1.0),
    slack: float = 1.05,
    seed: int = 0,
) -> ValidationReport:
    """Empirical Lipschitz ratios compared against the declared constants.

    Half of the sample pairs are far apart, half are nearby (relative offset
    1e-4), so the sweep sees both global and local slopes. ``g`` is split
    into its y-part and z-part and compared in the squared convention
    ``|g(y,z) - g(y',z')|^2 <= L|y-y'|^2 + alpha|z-z'|^2``.
    """
    if not 0.0 < model.alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {model.alpha}")
    rng = np.random.default_rng(seed)
    m = max(int(sample_budget), 2)
    lo, hi = box
    n, d, k = model.n, model.d, model.k

    def draw():
        t = rng.uniform(*t_range)
        x = rng.uniform(lo, hi, size=(m, n))
        y = rng.uniform(lo, hi, size=m)
        z = rng.uniform(lo, hi, size=(m, d))
        if controls is not None:
            v = controls.take(rng.integers(len(controls), size=m))
        else:
            v = rng.uniform(-1.0, 1.0, size=(m, k))
        return t, x, y, z, v

    def partner(a):
        near = rng.uniform(-1, 1, size=a.shape) * 1e-4 * (hi - lo)
        far = rng.uniform(lo, hi, size=a.shape) - a
        shift = np.where(np.arange(a.shape[0]).reshape((-1,) + (1,) * (a.ndim - 1)) % 2 == 0, near, far)
        return a + shift

    t, x, y, z, v = draw()
    if controls is not None:
        v2 = controls.take(rng.integers(len(controls), size=m))
    else:
        v2 = partner(v)
    args = {"x": (x, partner(x)), "y": (y, partner(y)), "z": (z, partner(z)), "v": (v, v2)}

    def norm(a):
        a = np.asarray(a)
        return np.sqrt(np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1))

    def sweep(name, fn, names, over):
        # one argument perturbed at a time; the largest single-argument slope
        base = {key: args[key][0] for key in names}
        f0 = _finite(name, fn(t, **base))
        worst = 0.0
        for key in over:
            moved = dict(base)
            moved[key] = args[key][1]
            f1 = _finite(name, fn(t, **moved))
            worst = max(worst, _max_ratio(norm(f1 - f0), norm(args[key][1] - args[key][0])))
        return worst

    b = lambda t, x, v: model.b(t, x, v)
    s = lambda t, x, v: model.sigma(t, x, v)
    f = lambda t, x, y, z, v: model.f(t, x, y, z, v)
    g = lambda t, x, y, z: model.g(t, x, y, z)
    h = lambda t, x: model.h(x)
    ratios = {
        "b": sweep("b", b, "xv", "xv"),
        "sigma": sweep("sigma", s, "xv", "xv"),
        "f": sweep("f", f, "xyzv", "xyzv"),
        "h": sweep("h", h, "x", "x"),
        "g_y": sweep("g", g, "xyz", "y"),
        "g_z": sweep("g", g, "xyz", "z"),
    }

    declared = {"b": model.lip_L, "sigma": model.lip_L, "f": model.lip_L, "h": model.lip_L,
                "g_y": model.lip_L, "g_z": model.alpha}
    passed = {}
    for key in ("b", "sigma", "f", "h"):
        passed[key] = ratios[key] <= declared[key] * slack
    passed["g_y"] = ratios["g_y"] ** 2 <= model.lip_L * slack
    passed["g_z"] = ratios["g_z"] ** 2 <= model.alpha * slack
    return ValidationReport(ratios=ratios, declared=declared, passed=passed, slack=slack)


@dataclass(frozen=True)
class BrownianEnvironment:
    grid: TimeGrid
    w_increments: np.ndarray  # (M, n_steps, d)
    b_increments: np.ndarray  # (n_steps, l)
    master_seed: int
    b_seed: int

    @property
    def m_paths(self) -> int:
        return self.w_increments.shape[0]

    @property
    def d(self) -> int:
        return self.w_increments.shape[2]

    @property
    def l(self) -> int:
        return self.b_increments.shape[1]

    @property
    def seeds(self) -> tuple:
        return (self.master_seed, self.b_seed)

    def b_path(self) -> np.ndarray:
        """B_{t_i} - B_{t0}, shape (n_steps + 1, l)."""
        out = np.zeros((self.grid.n_steps + 1, self.l))
        out[1:] = np.cumsum(self.b_increments, axis=0)
        return out


def _path_normals(master_seed: int, start: int, stop: int, n_steps: int, d: int) -> np.ndarray:
    out = np.empty((stop - start, n_steps, d))
    for j, p in enumerate(range(start, stop)):
        ss = np.random.SeedSequence(master_seed, spawn_key=(p,))
        out[j] = np.random.Generator(np.random.PCG64(ss)).standard_normal((n_steps, d))
    return out


def build_environment(
    grid: TimeGrid,
    m_paths: int,
    dims: tuple = (1, 1),
    master_seed: int = 0,
    b_seed: int = 1,
    workers: int = 1,
) -> BrownianEnvironment:
    """Draw the forward increments (one stream per path) and the shared B-path.

    Path ``p`` draws from ``SeedSequence(master_seed, spawn_key=(p,))``, so its
    noise does not depend on ``m_paths`` or on how the paths are split across
    ``workers``. Refining the grid draws fresh noise; no Brownian-bridge
    coupling between grids is attempted.
    """
    d, l = dims
    if m_paths < 1:
        raise ValueError("need at least one path")
    if grid.n_steps < 1:
        raise ValueError("need at least one step")
    if d < 1 or l < 1:
        raise ValueError("noise dimensions must be >= 1")
    sq = np.sqrt(grid.dt)
    workers = max(1, int(workers))
    bounds = np.linspace(0, m_paths, workers + 1).astype(int)
    if workers == 1:
        normals = _path_normals(master_seed, 0, m_paths, grid.n_steps, d)
    else:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(lambda ab: _path_normals(master_seed, ab[0], ab[1], grid.n_steps, d),
                                   zip(bounds[:-1], bounds[1:])))
        normals = np.concatenate(chunks, axis=0)
    w = normals * sq
    b_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(b_seed)))
    b = b_rng.standard_normal((grid.n_steps, l)) * sq
    w.setflags(write=False)
    b.setflags(write=False)
    return BrownianEnvironment(grid, w, b, int(master_seed), int(b_seed))


@dataclass(frozen=True)
class WeightFunction:
    """Positive weight with a quadrature certificate on the truncated box."""

    rho: Callable
    dim: int = 1
    radius: float = 6.0
    tol: float = 1e-3
    mass: float = field(default=np.nan, init=False)
    second_moment: float = field(default=np.nan, init=False)

    def __post_init__(self):
        count = 1201 if self.dim == 1 else (241 if self.dim == 2 else 41)
        grid = SpaceGrid.uniform(self.dim, self.radius, count)
        vals = np.asarray(self.rho(grid.points), dtype=float)
        if not np.all(vals > 0):
            raise ValueError("weight must be strictly positive on the grid")
        w = grid.quadrature_weights().ravel()
        mass = float(np.sum(w * vals))
        second = float(np.sum(w * vals * np.sum(grid.points ** 2, axis=1)))
        if not abs(mass - 1.0) <= self.tol:
            raise ValueError(f"weight integrates to {mass}, not 1 within {self.tol}")
        if not np.isfinite(second):
            raise ValueError("second moment of the weight is not finite")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "second_moment", second)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.rho(np.atleast_2d(x)), dtype=float)

    @classmethod
    def gaussian(cls, dim: int = 1, radius: float = 6.0, tol: float = 1e-3) -> "WeightFunction":
        c = (2 * np.pi) ** (-dim / 2)
        return cls(lambda x: c * np.exp(-0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)), dim, radius, tol)


def refine_environment(env: BrownianEnvironment, seed: int = 0) -> BrownianEnvironment:
    """Halve the step by Brownian-bridge splitting of every increment.

    Each increment ``D`` over ``dt`` becomes ``D/2 + e`` and ``D/2 - e`` with
    ``e ~ N(0, dt/4)``, so the refined paths pass through the coarse ones and
    the B-path realisation is preserved. The split draws are keyed by ``seed``.
    """
    grid = env.grid.refine()
    half = np.sqrt(env.grid.dt) / 2.0
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(env.b_seed)])))

    def split(inc, e):
        out = np.empty(inc.shape[:-2] + (2 * inc.shape[-2], inc.shape[-1]))
        out[..., 0::2, :] = inc / 2 + e
        out[..., 1::2, :] = inc / 2 - e
        return out

    b = split(env.b_increments, rng.standard_normal(env.b_increments.shape) * half)
    w = split(env.w_increments, rng.standard_normal(env.w_increments.shape) * half)
    w.setflags(write=False)
    b.setflags(write=False)
    return BrownianEnvironment(grid, w, b, env.master_seed, env.b_seed)
