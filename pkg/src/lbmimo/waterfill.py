"""Water-filling power allocation over parallel Gaussian channels."""

from dataclasses import dataclass

import numpy as np

__all__ = ["WaterfillAllocation", "waterfill"]


@dataclass(frozen=True)
class WaterfillAllocation:
    """Optimal powers ``q``, the water level and the resulting rate in bits/use."""

    powers: np.ndarray
    water_level: float
    achieved_rate: float

    @property
    def active(self):
        return self.powers > 0


def waterfill(eig_sq, total_power, noise_var=1.0):
    """Maximize ``sum(log2(1 + g_l q_l / noise_var))`` s.t. ``sum(q) <= total_power``.

    Parameters
    ----------
    eig_sq : array_like
        Channel power gains ``g_l = lambda_l**2`` (nonnegative).
    total_power : float
        Power budget ``P_T >= 0``.
    noise_var : float
        Noise variance per channel.

    Returns
    -------
    WaterfillAllocation
        Powers in the input order. The active set is found exactly: channels
        are sorted by inverse gain and the largest prefix whose water level
        clears the next inverse gain is kept.
    """
    g = np.asarray(eig_sq, dtype=np.float64).ravel()
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("channel gains must be finite and nonnegative")
    if total_power < 0:
        raise ValueError("total_power must be nonnegative")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")

    q = np.zeros_like(g)
    usable = np.flatnonzero(g > 0)
    if usable.size == 0:
        return WaterfillAllocation(q, 0.0, 0.0)

    inv_gain = noise_var / g[usable]
    order = np.argsort(inv_gain, kind="stable")
    floors = inv_gain[order]
    if total_power == 0:
        return WaterfillAllocation(q, float(floors[0]), 0.0)

    # water level with the n cheapest channels active
    n = np.arange(1, floors.size + 1)
    levels = (total_power + np.cumsum(floors)) / n
    # feasible iff the level stays above every active floor and below the next one
    # max(1, ...) covers budgets below the rounding of the first level
    n_active = max(1, int(np.count_nonzero(levels > floors)))
    level = levels[n_active - 1]

    active = usable[order[:n_active]]
    q[active] = level - floors[:n_active]
    rate = float(np.sum(np.log2(1.0 + g[active] * q[active] / noise_var)))
    return WaterfillAllocation(q, float(level), rate)
