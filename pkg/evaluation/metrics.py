import numpy as np


def _pair(estimates, truths):
    estimates = np.asarray(estimates, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if estimates.shape != truths.shape:
        raise ValueError(f"Estimates ({estimates.size}) and truths ({truths.size}) differ in length")
    if estimates.size == 0:
        raise ValueError("Cannot score an empty set of points")
    return estimates, truths


def rmse(estimates, truths) -> float:
    """Root mean square error."""
    estimates, truths = _pair(estimates, truths)
    return float(np.sqrt(np.mean((estimates - truths) ** 2)))


def re(estimates, truths) -> float:
    """Relative error ||ŷ - y||_2 / ||y||_2 in percent."""
    estimates, truths = _pair(estimates, truths)
    norm = np.linalg.norm(truths)
    if norm == 0:
        raise ValueError("Relative error is undefined for an all-zero truth vector")
    return float(np.linalg.norm(estimates - truths) / norm * 100.0)


def pointwise_re(estimates, truths) -> np.ndarray:
    """
    Per-point |ŷ - y| / |y| in percent; zero truths give 0 when matched exactly
    and inf otherwise.
    """
    estimates, truths = _pair(estimates, truths)
    error = np.abs(estimates - truths)
    scale = np.abs(truths)
    out = np.where(error == 0, 0.0, np.inf)
    np.divide(error * 100.0, scale, out=out, where=scale > 0)
    return out
