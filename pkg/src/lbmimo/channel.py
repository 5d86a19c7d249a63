"""System geometry, seeded random streams and i.i.d. Rayleigh channel draws."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ChannelSet",
    "SystemConfig",
    "draw_channel_batch",
    "draw_channels",
    "substream",
]


@dataclass(frozen=True)
class SystemConfig:
    """Antenna, user, stream and power geometry of one broadcast system.

    Every user has ``n_rx`` antennas and receives ``streams_per_user == n_rx``
    streams; the base station has exactly ``n_tx == n_users * n_rx`` antennas.
    Powers are linear, ``rho = per_user_power / noise_var``.
    """

    n_tx: int
    n_rx: int
    n_users: int
    streams_per_user: int
    qam_order: int = 4
    noise_var: float = 1.0
    per_user_power: float = 1.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_users", "streams_per_user"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.qam_order != 4:
            raise ConfigurationError(f"only 4-QAM is supported, got order {self.qam_order}")
        if not self.noise_var > 0:
            raise ConfigurationError(f"noise_var must be > 0, got {self.noise_var}")
        if not self.per_user_power > 0:
            raise ConfigurationError(f"per_user_power must be > 0, got {self.per_user_power}")
        if self.streams_per_user != self.n_rx:
            raise ConfigurationError(
                f"streams_per_user ({self.streams_per_user}) must equal n_rx ({self.n_rx})"
            )
        if self.n_tx != self.n_users * self.n_rx:
            raise ConfigurationError(
                f"n_tx ({self.n_tx}) must equal n_users * n_rx "
                f"({self.n_users} * {self.n_rx} = {self.n_users * self.n_rx})"
            )

    @classmethod
    def scenario(cls, n_rx, n_users, snr_db=None, **kwargs):
        """Build the ``{n_rx, n_users}`` configuration, optionally at ``snr_db``.

        With ``snr_db`` given, the per-user power is kept and the noise variance
        is set so that ``rho`` matches.
        """
        cfg = cls(n_tx=n_rx * n_users, n_rx=n_rx, n_users=n_users, streams_per_user=n_rx, **kwargs)
        return cfg if snr_db is None else cfg.at_snr_db(snr_db)

    @property
    def rho(self):
        return self.per_user_power / self.noise_var

    @property
    def snr_db(self):
        return 10.0 * np.log10(self.rho)

    @property
    def total_power(self):
        return self.n_users * self.per_user_power

    @property
    def bits_per_symbol(self):
        return int(np.log2(self.qam_order))

    def at_snr_db(self, snr_db):
        return replace(self, noise_var=self.per_user_power * 10.0 ** (-snr_db / 10.0))

    def to_dict(self):
        return {
            "n_tx": self.n_tx,
            "n_rx": self.n_rx,
            "n_users": self.n_users,
            "streams_per_user": self.streams_per_user,
            "qam_order": self.qam_order,
            "noise_var": self.noise_var,
            "per_user_power": self.per_user_power,
        }


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channel matrices ``H_k``, stacked as a (K, n_rx, n_tx) array."""

    matrices: np.ndarray
    seed: int | None = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=np.complex128)
        if m.ndim != 3:
            raise ValueError(f"expected a (K, n_rx, n_tx) array, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("channel matrices contain NaN or Inf")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @classmethod
    def from_matrices(cls, matrices, seed=None):
        return cls(np.stack([np.asarray(h, dtype=np.complex128) for h in matrices]), seed)

    def __len__(self):
        return self.matrices.shape[0]

    def __getitem__(self, k):
        return self.matrices[k]

    def __iter__(self):
        return iter(self.matrices)

    @property
    def n_users(self):
        return self.matrices.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.matrices, other.matrices)

    __hash__ = None


def substream(master_seed, *keys):
    """Independent generator for the substream addressed by ``keys``.

    The stream depends only on ``(master_seed, *keys)``, never on how many
    other streams were consumed before it, so work units can run in any order.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def _complex_gaussian(rng, shape):
    # unit total variance, 1/2 per real dimension
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def draw_channel_batch(rng, cfg, batch):
    """Draw ``batch`` independent channel realizations, shape (batch, K, n_rx, n_tx)."""
    return _complex_gaussian(rng, (batch, cfg.n_users, cfg.n_rx, cfg.n_tx))


def draw_channels(cfg, seed):
    """One i.i.d. CN(0, 1) channel realization for every user."""
    rng = substream(seed)
    return ChannelSet(draw_channel_batch(rng, cfg, 1)[0], seed=int(seed))
