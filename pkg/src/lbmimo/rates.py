"""Closed-form achievable rates for BD, channel inversion and lattice precoding.

All rates are in bits per channel use (log base 2).
"""

from dataclasses import dataclass, field

import numpy as np

from .bd import build_precoder_set
from .waterfill import WaterfillAllocation, waterfill

__all__ = [
    "RateReport",
    "WaterfillAllocation",
    "c_bd",
    "c_bd_from_precoders",
    "equal_power_capacity",
    "perturbation_spread",
    "per_stream_snr",
    "rate_ci",
    "rate_prop",
    "rate_realized",
    "rate_sum_prop",
    "waterfill",
]


@dataclass(frozen=True)
class RateReport:
    scheme: str
    rho: float
    per_user: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def sum_rate(self):
        return float(sum(self.per_user))


def c_bd(channels, cfg, total_power=None, per_user=False):
    """Sum rate of BD with water-filling.

    ``per_user=False`` water-fills all users' streams jointly under
    ``total_power`` (defaults to ``K * per_user_power``). ``per_user=True``
    gives each user ``total_power / K`` and water-fills it separately.
    """
    if total_power is None:
        total_power = cfg.total_power
    pre = build_precoder_set(channels, cfg)
    return c_bd_from_precoders(pre, total_power, cfg.noise_var, per_user)


def c_bd_from_precoders(precoders, total_power, noise_var=1.0, per_user=False):
    """:func:`c_bd` for precoders that are already built."""
    n_users = len(precoders)
    gains = [p.singular_values**2 for p in precoders]
    if per_user:
        rates = tuple(waterfill(g, total_power / n_users, noise_var).achieved_rate for g in gains)
        label = "C_BD_per_user"
    else:
        g_all = np.concatenate(gains)
        alloc = waterfill(g_all, total_power, noise_var)
        terms = np.log2(1.0 + g_all * alloc.powers / noise_var)
        splits = np.cumsum([g.size for g in gains])[:-1]
        rates = tuple(float(np.sum(chunk)) for chunk in np.split(terms, splits))
        label = "C_BD"
    return RateReport(
        scheme=label,
        rho=total_power / n_users / noise_var,
        per_user=rates,
        metadata={"total_power": float(total_power), "per_user_constraint": per_user},
    )


def rate_ci(precoders, rho, logdet=False):
    """Channel-inversion sum rate without perturbation.

    Each user contributes ``log2(1 + rho / sum(1 / lambda_l^2))``. With
    ``logdet=True`` the term is multiplied by the stream count, which is the
    ``log det(I + rho / ||H_eff^-1||_F^2 I)`` form.
    """
    rates = []
    degenerate = []
    for k, p in enumerate(precoders):
        lam = p.singular_values
        if np.any(lam == 0):
            rates.append(0.0)
            degenerate.append(k)
            continue
        r = float(np.log2(1.0 + rho / np.sum(1.0 / lam**2)))
        rates.append(r * p.streams if logdet else r)
    return RateReport(
        scheme="R_CI",
        rho=rho,
        per_user=tuple(rates),
        metadata={"logdet": logdet, "zero_singular_users": degenerate},
    )


def _xi(user, s_tilde):
    return np.abs(user.u.conj().T @ np.asarray(s_tilde, dtype=np.complex128))


def per_stream_snr(user, s_tilde, rho):
    """Received SNR of each stream for a realized perturbed symbol ``s~``:
    ``rho * xi_l^2 / sum_m(xi_m^2 / lambda_m^2)`` with ``xi_l = |u_l^H s~|``.
    """
    xi2 = _xi(user, s_tilde) ** 2
    gamma = float(np.sum(xi2 / user.singular_values**2))
    if gamma == 0.0:
        raise ValueError("SNR undefined for an all-zero perturbed symbol")
    return rho * xi2 / gamma


def rate_realized(user, s_tilde, rho):
    return float(np.sum(np.log2(1.0 + per_stream_snr(user, s_tilde, rho))))


def rate_prop(user, rho):
    """Rate of one user under optimal perturbation: ``sum(log2(1 + rho lambda_l^2 / L))``."""
    lam2 = user.singular_values**2
    return float(np.sum(np.log2(1.0 + rho * lam2 / user.streams)))


def equal_power_capacity(h, rho):
    """``log2 det(I + rho / L * H H^H)`` for a square channel ``H`` with ``L`` streams."""
    h = np.asarray(h, dtype=np.complex128)
    n = h.shape[1]
    gram = np.eye(h.shape[0]) + (rho / n) * (h @ h.conj().T)
    sign, logdet = np.linalg.slogdet(gram)
    return float(logdet / np.log(2.0))


def rate_sum_prop(precoders, rho):
    return RateReport(
        scheme="R_sum",
        rho=rho,
        per_user=tuple(rate_prop(p, rho) for p in precoders),
        metadata={"power_constraint": "equal per-user power, K * P = P_T"},
    )


def perturbation_spread(user, s_tilde):
    """Ratio max/min of ``xi_l^2 / lambda_l^2`` after a finite-radius perturbation.

    Optimal (infinite-lattice) perturbation would equalize these terms; the
    ratio shows how far a realized ``s~`` is from that.
    """
    terms = _xi(user, s_tilde) ** 2 / user.singular_values**2
    lo = terms.min()
    return float(np.inf if lo == 0 else terms.max() / lo)
