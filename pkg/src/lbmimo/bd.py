"""Block-diagonalization nulling precoders and effective channels."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateChannelError
from .numeric import DEFAULT_RANK_TOL, svd
from .waterfill import waterfill

__all__ = [
    "MAX_CONDITION",
    "PrecoderBatch",
    "PrecoderSet",
    "UserPrecoder",
    "bd_wf_precoder",
    "build_precoder_batch",
    "build_precoder_set",
    "null_space_precoder",
    "stack_complement",
]

#: Effective channels with a larger 2-norm condition number are redrawn.
MAX_CONDITION = 1e12


def stack_complement(channels, k):
    """Stack every ``H_l`` with ``l != k`` (ascending ``l``) into one matrix.

    With a single user the result has zero rows: nothing needs nulling.
    """
    n_users = len(channels)
    if not 0 <= k < n_users:
        raise IndexError(f"user index {k} out of range for {n_users} users")
    others = [channels[l] for l in range(n_users) if l != k]
    if not others:
        return np.zeros((0, channels[k].shape[1]), dtype=np.complex128)
    return np.vstack(others)


def null_space_precoder(h_tilde, l_k, rank_tol=DEFAULT_RANK_TOL):
    """Orthonormal basis of ``l_k`` directions in the null space of ``h_tilde``.

    The basis is the trailing ``l_k`` right singular vectors of the full SVD.

    Raises
    ------
    ConfigurationError
        If the null space has fewer than ``l_k`` dimensions.
    """
    h_tilde = np.asarray(h_tilde, dtype=np.complex128)
    n_tx = h_tilde.shape[1]
    if h_tilde.shape[0] == 0:
        if l_k > n_tx:
            raise ConfigurationError(f"need {l_k} null-space dimensions, only {n_tx} available")
        return np.eye(n_tx, dtype=np.complex128)[:, n_tx - l_k:]
    f = svd(h_tilde)
    available = n_tx - f.rank(rank_tol)
    if available < l_k:
        raise ConfigurationError(
            f"need {l_k} null-space dimensions, only {available} available "
            f"({h_tilde.shape[0]}x{n_tx} interference channel)"
        )
    return f.v[:, n_tx - l_k:]


@dataclass(frozen=True)
class UserPrecoder:
    """Nulling matrix, effective channel and its factorizations for one user.

    ``h_eff = u @ diag(singular_values) @ v^H``; ``h_eff_inv`` is computed once
    and reused by the perturbation search.
    """

    nulling: np.ndarray
    h_eff: np.ndarray
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    h_eff_inv: np.ndarray

    @property
    def streams(self):
        return self.h_eff.shape[0]

    @property
    def condition(self):
        return float(self.singular_values[0] / self.singular_values[-1])


@dataclass(frozen=True)
class PrecoderSet:
    users: tuple

    def __len__(self):
        return len(self.users)

    def __getitem__(self, k):
        return self.users[k]

    def __iter__(self):
        return iter(self.users)

    @property
    def nulling_matrices(self):
        return [p.nulling for p in self.users]


def _check_dimensions(cfg, channels):
    if len(channels) != cfg.n_users or channels[0].shape != (cfg.n_rx, cfg.n_tx):
        raise ConfigurationError(
            f"channel set of {len(channels)} x {channels[0].shape} does not match "
            f"{cfg.n_users} users x ({cfg.n_rx}, {cfg.n_tx})"
        )
    needed = (cfg.n_users - 1) * cfg.n_rx + cfg.streams_per_user
    if cfg.n_tx < needed:
        raise ConfigurationError(f"dimensionality constraint needs n_tx >= {needed}, got {cfg.n_tx}")


def build_precoder_set(channels, cfg, rank_tol=DEFAULT_RANK_TOL):
    """Nulling precoders ``M_k`` and effective channels ``H_k M_k`` for all users.

    Raises
    ------
    DegenerateChannelError
        If an interference channel loses rank or an effective channel has
        condition number above ``MAX_CONDITION``.
    """
    _check_dimensions(cfg, channels)
    expected_null = cfg.n_tx - (cfg.n_users - 1) * cfg.n_rx
    users = []
    for k in range(cfg.n_users):
        h_tilde = stack_complement(channels, k)
        if h_tilde.shape[0]:
            f = svd(h_tilde)
            null_dim = cfg.n_tx - f.rank(rank_tol)
            if null_dim != expected_null:
                raise DegenerateChannelError(
                    f"user {k}: null space has {null_dim} dimensions, expected {expected_null}",
                    user=k,
                )
        m = null_space_precoder(h_tilde, cfg.streams_per_user, rank_tol)
        h_eff = channels[k] @ m
        fe = svd(h_eff)
        lam = fe.sigma
        cond = np.inf if lam[-1] == 0 else lam[0] / lam[-1]
        if cond > MAX_CONDITION:
            raise DegenerateChannelError(
                f"user {k}: effective channel condition number {cond:.3g} exceeds {MAX_CONDITION:g}",
                user=k,
                condition=cond,
            )
        users.append(
            UserPrecoder(
                nulling=m,
                h_eff=h_eff,
                u=fe.u,
                singular_values=lam,
                v=fe.v,
                h_eff_inv=np.linalg.inv(h_eff),
            )
        )
    return PrecoderSet(tuple(users))


def bd_wf_precoder(channels, cfg, total_power, per_user=False):
    """Classical BD precoders ``M_k V_k Q_k^(1/2)`` with water-filled powers.

    With ``per_user=False`` (default) the power ``total_power`` is shared by
    water-filling over all users' streams jointly; with ``per_user=True`` each
    user water-fills its own ``total_power / K``.
    """
    if total_power < 0:
        raise ValueError("total_power must be nonnegative")
    pre = build_precoder_set(channels, cfg)
    if per_user:
        powers = [
            waterfill(p.singular_values**2, total_power / cfg.n_users, cfg.noise_var).powers
            for p in pre
        ]
    else:
        gains = np.concatenate([p.singular_values**2 for p in pre])
        q = waterfill(gains, total_power, cfg.noise_var).powers
        powers = np.split(q, cfg.n_users)
    return [p.nulling @ p.v * np.sqrt(q) for p, q in zip(pre, powers)]


@dataclass
class PrecoderBatch:
    """Vectorized BD state for a batch of channel realizations.

    Arrays are indexed ``[trial, user, ...]``; ``degenerate`` flags trials
    that must be redrawn.
    """

    nulling: np.ndarray
    h_eff: np.ndarray
    h_eff_inv: np.ndarray
    degenerate: np.ndarray


def build_precoder_batch(h, cfg, rank_tol=DEFAULT_RANK_TOL):
    """Batched equivalent of :func:`build_precoder_set` for ``h`` of shape (B, K, N_R, N_T).

    Degenerate trials are flagged rather than raised; their entries are
    finite but meaningless.
    """
    b, n_users, n_rx, n_tx = h.shape
    l_k = cfg.streams_per_user
    nulling = np.empty((b, n_users, n_tx, l_k), dtype=np.complex128)
    degenerate = np.zeros(b, dtype=bool)
    for k in range(n_users):
        if n_users == 1:
            nulling[:, 0] = np.eye(n_tx, dtype=np.complex128)[:, n_tx - l_k:]
            continue
        others = np.delete(h, k, axis=1).reshape(b, (n_users - 1) * n_rx, n_tx)
        _, s, vh = np.linalg.svd(others, full_matrices=True)
        degenerate |= s[:, -1] <= rank_tol * s[:, 0]
        nulling[:, k] = vh[:, n_tx - l_k:, :].conj().swapaxes(-1, -2)
    h_eff = h @ nulling
    s = np.linalg.svd(h_eff, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = s[..., 0] / s[..., -1]
    bad = ~(cond <= MAX_CONDITION)
    degenerate |= bad.any(axis=1)
    safe = h_eff.copy()
    safe[bad] = np.eye(l_k)
    return PrecoderBatch(nulling, h_eff, np.linalg.inv(safe), degenerate)
