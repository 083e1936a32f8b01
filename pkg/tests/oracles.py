"""Reference values derived without the package under test.

Every function here uses only numpy/scipy. The module-level constants are
their outputs, frozen so the tests compare against fixed numbers;
``test_oracles.py`` regenerates them to show the freeze is faithful.
"""
import numpy as np
from scipy import integrate


def bump(x, center=0.0, radius=1.0):
    q = ((np.asarray(x, dtype=float) - center) / radius) ** 2
    out = np.zeros_like(q)
    inside = q < 1
    out[inside] = np.exp(-1.0 / (1.0 - q[inside]))
    return out


def gaussian_equivalence_ratio(center, radius, s, sigma=1.0, gh_nodes=80):
    """``int E phi(x + sigma W_s) rho(x) dx / int phi rho dx`` for the standard normal weight.

    The expectation is a Gauss-Hermite convolution in the noise; the outer
    x-integral is adaptive quadrature over the support of ``phi`` shifted by
    the noise node, so the x- and noise-integrals are done by different rules.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(gh_nodes)
    weights = weights / weights.sum()
    pdf = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    num = 0.0
    for z, wz in zip(nodes, weights):
        shift = sigma * np.sqrt(s) * z
        # x + shift must lie in the support, so x ranges over the shifted interval
        val, _ = integrate.quad(lambda x: bump(x + shift, center, radius) * pdf(x),
                                center - radius - shift, center + radius - shift, limit=200)
        num += wz * val
    den, _ = integrate.quad(lambda x: bump(x, center, radius) * pdf(x), center - radius, center + radius,
                            limit=200)
    return num / den


def gaussian_equivalence_ratio_closed(center, radius, s, sigma=1.0):
    """Same ratio by the Gaussian identity ``N(0,1) * N(0, sigma^2 s) = N(0, 1 + sigma^2 s)``."""
    v = 1.0 + sigma * sigma * s
    num, _ = integrate.quad(lambda y: bump(y, center, radius) * np.exp(-0.5 * y * y / v) / np.sqrt(2 * np.pi * v),
                            center - radius, center + radius)
    den, _ = integrate.quad(lambda y: bump(y, center, radius) * np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi),
                            center - radius, center + radius)
    return num / den


def linear_fine_grid(a, b, c, T, n_steps=2 ** 12, seed=0, paths=8):
    """Explicit backward recursion ``Y_i = Y_{i+1} (1 + a dt + b dB_i)`` on a fine grid.

    Returns ``(fine values, closed-form values)`` for ``paths`` independent
    B-paths; the closed form is ``c exp(a T + b B_T - b^2 T / 2)``.
    """
    rng = np.random.default_rng(seed)
    dt = T / n_steps
    db = rng.standard_normal((paths, n_steps)) * np.sqrt(dt)
    fine = c * np.prod(1.0 + a * dt + b * db, axis=1)
    exact = c * np.exp(a * T + b * db.sum(axis=1) - 0.5 * b * b * T)
    return fine, exact


def random_walk_sup_moment(k, paths=400_000, seed=1):
    """``E max_{j<=k} |S_j|^2 / k`` for a standard Gaussian random walk, with its standard error.

    This is the window ratio of the increment moment for ``X = W`` monitored
    on ``k`` grid steps, in the same discrete form the ensemble sees.
    """
    rng = np.random.default_rng(seed)
    s = np.cumsum(rng.standard_normal((paths, k)), axis=1)
    m = np.max(s ** 2, axis=1) / k
    return float(m.mean()), float(m.std(ddof=1) / np.sqrt(paths))


def martingale_nested(x0, sigma, T, paths=200_000, seed=2):
    """Nested Monte Carlo of ``E[X_T | X_0 = x0]`` for ``X = x0 + sigma W``; returns (mean, SE)."""
    rng = np.random.default_rng(seed)
    xt = x0 + sigma * np.sqrt(T) * rng.standard_normal(paths)
    return float(xt.mean()), float(xt.std(ddof=1) / np.sqrt(paths))


def snell_deterministic(t0, T=1.0, level=1.0, slope=1.0):
    """Obstacle ``level - slope t`` above ``h = 0`` with no noise: ``Y = V`` and ``K_T = slope (T - t0)``."""
    return level - slope * t0, slope * (T - t0)


# frozen outputs ---------------------------------------------------------

# ratio for centres {-1, -0.5, 0, 0.5, 1}, radius 1, sigma 1, at s in {0.25, 0.5, 1.0}
EQUIVALENCE_CENTERS = (-1.0, -0.5, 0.0, 0.5, 1.0)
EQUIVALENCE_TIMES = (0.25, 0.5, 1.0)
EQUIVALENCE_RATIOS = {
    (-1.0, 0.25): 0.9784056197656471,
    (-1.0, 0.5): 0.9509246024693884,
    (-1.0, 1.0): 0.8936564295727579,
    (-0.5, 0.25): 0.9247323554275906,
    (-0.5, 0.5): 0.8638469931247211,
    (-0.5, 1.0): 0.770743223894498,
    (0.0, 0.25): 0.9075910462553537,
    (0.0, 0.5): 0.8367420526766738,
    (0.0, 1.0): 0.7337668988254692,
    (0.5, 0.25): 0.9247323554275906,
    (0.5, 0.5): 0.8638469931247206,
    (0.5, 1.0): 0.7707432238944979,
    (1.0, 0.25): 0.9784056197656471,
    (1.0, 0.5): 0.9509246024693881,
    (1.0, 1.0): 0.8936564295727579,
}

# random-walk sup moment for k = 5, 10, 20 steps: (mean, SE)
SUP_MOMENT = {
    5: (1.3201529452839371, 0.0022512526940457298),
    10: (1.4449584699272766, 0.0023072355472338714),
    20: (1.5431670533751676, 0.0023620365448834067),
}
