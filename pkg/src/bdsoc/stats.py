import numpy as np


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two ladder points")
    if np.any(x <= 0) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def standard_error(samples) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        return 0.0
    return float(np.std(samples, ddof=1) / np.sqrt(samples.size))


def richardson(values, ratio: float = 2.0, order: float = 1.0) -> float:
    """Extrapolate the last two entries of a sequence converging at ``ratio**-order``."""
    a, b = float(values[-2]), float(values[-1])
    r = ratio ** order
    return (r * b - a) / (r - 1)
