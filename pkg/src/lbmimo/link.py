"""Transmit/receive chains for the four schemes and the Monte Carlo BER engine.

Transmit functions return stream-domain vectors ``x_k`` (length ``L_k``);
:func:`broadcast` maps them onto the antennas through the nulling matrices
and :func:`propagate` applies the full K-user channel. Every chain normalizes
``E||x_k||^2`` to one; the per-user power ``P`` is applied as the amplitude
``sqrt(P)`` at the antennas.
"""

import enum
import itertools
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bd import build_precoder_batch
from .channel import _complex_gaussian, draw_channel_batch, substream
from .errors import ConfigurationError
from .lattice import (
    DEFAULT_RADIUS,
    QAM4,
    modulo_fold,
    perturb,
    perturb_batch,
    qam_demodulate,
    qam_modulate,
)

__all__ = [
    "BerCurve",
    "BerPoint",
    "SchemeId",
    "StoppingRule",
    "broadcast",
    "diversity_slope",
    "plain_scale",
    "propagate",
    "receive_lb",
    "receive_ml",
    "receive_zf",
    "run_ber",
    "simulate_block",
    "snr_at_ber",
    "transmit_bd_plain",
    "transmit_lb",
    "transmit_zf",
    "worker_count",
]

log = logging.getLogger(__name__)


class SchemeId(str, enum.Enum):
    LB_MU_SM = "LB-MU-SM"
    ZF_MU_SM = "ZF-MU-SM"
    ZF_RX = "ZF-RX"
    ML_RX = "ML-RX"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().upper().replace("_", "-")
        aliases = {"LB": cls.LB_MU_SM, "PROPOSED": cls.LB_MU_SM, "ZF": cls.ZF_MU_SM, "ML": cls.ML_RX}
        if key in aliases:
            return aliases[key]
        for member in cls:
            if member.value == key:
                return member
        raise ConfigurationError(f"unknown scheme {name!r}; expected one of {[m.value for m in cls]}")

    @property
    def precoded(self):
        """True for the schemes that invert the effective channel at the transmitter."""
        return self in (SchemeId.LB_MU_SM, SchemeId.ZF_MU_SM)


# -- single-realization chains ------------------------------------------------


def transmit_lb(precoders, symbols, radius=DEFAULT_RADIUS, c=QAM4):
    """Perturbed channel-inversion transmit vectors ``H_eff^-1 (s + p) / sqrt(gamma)``.

    Returns ``(xs, gammas)``; every ``x_k`` has unit norm.
    """
    xs, gammas = [], []
    for user, s in zip(precoders, symbols):
        sol = perturb(s, user.h_eff_inv, c, radius)
        if sol.gamma == 0.0:
            raise ValueError("cannot normalize an all-zero symbol vector")
        xs.append(user.h_eff_inv @ sol.s_tilde / np.sqrt(sol.gamma))
        gammas.append(sol.gamma)
    return xs, gammas


def transmit_zf(precoders, symbols, c=QAM4):
    """Channel inversion without perturbation, normalized per realization."""
    return transmit_lb(precoders, symbols, radius=0, c=c)


def plain_scale(streams, power=1.0, c=QAM4):
    """Amplitude seen by a BD receiver: ``sqrt(P / (L * E_s))``."""
    return np.sqrt(power / (streams * c.mean_energy))


def transmit_bd_plain(precoders, symbols, c=QAM4):
    """Equal power per stream, no inversion: ``x_k = s_k / sqrt(L_k E_s)``."""
    return [np.asarray(s) * plain_scale(len(s), 1.0, c) for s in symbols]


def broadcast(precoders, xs, power=1.0):
    """Antenna signal ``sqrt(P) * sum_k M_k x_k``."""
    return np.sqrt(power) * sum(p.nulling @ x for p, x in zip(precoders, xs))


def propagate(channels, antenna_signal, noise=None):
    """Received vectors ``y_k = H_k x + n_k`` for every user."""
    ys = [h @ antenna_signal for h in channels]
    if noise is not None:
        ys = [y + n for y, n in zip(ys, noise)]
    return ys


def receive_lb(y, gamma, scale=1.0, c=QAM4):
    """Undo the gain, fold into the fundamental region and slice.

    ``y`` may be a stack of received vectors (last axis = streams) with a
    matching array of ``gamma`` values.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if not np.all(gamma > 0):
        raise ValueError("gamma must be positive")
    z = np.asarray(y) * (np.sqrt(gamma) / scale)[..., None]
    return qam_demodulate(modulo_fold(z, c.lattice_step), c)


def receive_zf(y, h_eff, c=QAM4, scale=1.0):
    """Zero-forcing equalization ``H_eff^-1 y`` followed by slicing (stacks allowed)."""
    z = np.linalg.solve(h_eff, np.asarray(y)[..., None])[..., 0]
    return qam_demodulate(z / scale, c)


def _ml_candidates(streams, c):
    # every symbol vector; index order = lexicographic order of the bit vectors
    bits = np.array(list(itertools.product((0, 1), repeat=streams * c.bits_per_symbol)), dtype=np.int8)
    return bits, qam_modulate(bits, c)


def receive_ml(y, h_eff, c=QAM4, scale=1.0):
    """Exhaustive maximum-likelihood detection over all ``M^L`` symbol vectors.

    Minimizes ``||y - scale * H_eff s||^2``; exact ties go to the lowest
    candidate index. Accepts stacks of ``y`` and ``h_eff``.
    """
    h_eff = np.asarray(h_eff)
    bits, cands = _ml_candidates(h_eff.shape[-1], c)
    hc = scale * np.einsum("...ij,mj->...mi", h_eff, cands)
    r = np.asarray(y)[..., None, :] - hc
    metric = np.sum(r.real**2 + r.imag**2, axis=-1)
    return bits[np.argmin(metric, axis=-1)]


# -- vectorized Monte Carlo block -------------------------------------------------


def simulate_block(cfg, scheme, rng, trials, radius=DEFAULT_RADIUS, c=QAM4):
    """Run ``trials`` independent channel uses; returns ``(bit_errors, bits, redraws)``.

    All users transmit simultaneously through the full K-user channel. The
    draw order from ``rng`` is fixed: channels, bits, noise, then any
    redraws of degenerate channels.
    """
    scheme = SchemeId.parse(scheme)
    k, n_rx, l_k = cfg.n_users, cfg.n_rx, cfg.streams_per_user
    nbits = l_k * c.bits_per_symbol

    h = draw_channel_batch(rng, cfg, trials)
    bits = rng.integers(0, 2, size=(trials, k, nbits), dtype=np.int8)
    noise = _complex_gaussian(rng, (trials, k, n_rx)) * np.sqrt(cfg.noise_var)

    pre = build_precoder_batch(h, cfg)
    redraws = 0
    while pre.degenerate.any():
        bad = np.flatnonzero(pre.degenerate)
        redraws += bad.size
        log.info("redrawing %d degenerate channel realizations", bad.size)
        h[bad] = draw_channel_batch(rng, cfg, bad.size)
        fix = build_precoder_batch(h[bad], cfg)
        pre.nulling[bad] = fix.nulling
        pre.h_eff[bad] = fix.h_eff
        pre.h_eff_inv[bad] = fix.h_eff_inv
        pre.degenerate[bad] = fix.degenerate

    s = qam_modulate(bits, c)  # (T, K, L)
    amp = np.sqrt(cfg.per_user_power)
    if scheme.precoded:
        if scheme is SchemeId.LB_MU_SM and radius != 0:
            s_tilde, _ = perturb_batch(s, pre.h_eff_inv, c, radius)
        else:
            s_tilde = s
        x = np.einsum("tkij,tkj->tki", pre.h_eff_inv, s_tilde)
        gamma = np.sum(x.real**2 + x.imag**2, axis=-1)
        x = x / np.sqrt(gamma)[..., None]
    else:
        x = s * plain_scale(l_k, 1.0, c)

    antenna = amp * np.einsum("tkij,tkj->ti", pre.nulling, x)
    y = np.einsum("tkrn,tn->tkr", h, antenna) + noise

    if scheme.precoded:
        est = receive_lb(y, gamma, amp, c)
    elif scheme is SchemeId.ZF_RX:
        est = receive_zf(y, pre.h_eff, c, plain_scale(l_k, cfg.per_user_power, c))
    else:
        est = receive_ml(y, pre.h_eff, c, plain_scale(l_k, cfg.per_user_power, c))

    errors = int(np.count_nonzero(est != bits))
    return errors, int(bits.size), redraws


# -- BER curves -----------------------------------------------------------------


@dataclass(frozen=True)
class StoppingRule:
    """Stop once ``min_bit_errors`` and ``min_trials`` are both reached, or at ``max_trials``."""

    min_bit_errors: int = 200
    min_trials: int = 2000
    max_trials: int = 1_000_000

    def __post_init__(self):
        if self.min_bit_errors < 0 or self.min_trials < 0 or self.max_trials < 1:
            raise ConfigurationError(f"invalid stopping rule {self}")

    def done(self, errors, trials):
        if trials >= self.max_trials:
            return True
        return errors >= self.min_bit_errors and trials >= self.min_trials


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    bit_errors: int
    bits_simulated: int
    trials: int
    seed: int
    redraws: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.bits_simulated


@dataclass(frozen=True)
class BerCurve:
    scheme: str
    seed: int
    points: tuple
    config: dict = field(default_factory=dict)

    @property
    def snr_db(self):
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self):
        return np.array([p.ber for p in self.points])


def worker_count(workers=None):
    """Worker threads: explicit argument, else ``MIMO_SIM_THREADS``, else CPU count."""
    if workers is None:
        env = os.environ.get("MIMO_SIM_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {workers}")
    return int(workers)


def _block_sizes(stop, block_size):
    done = 0
    while done < stop.max_trials:
        n = min(block_size, stop.max_trials - done)
        yield n
        done += n


def _run_point(cfg, scheme, snr_index, master_seed, stop, radius, block_size, pool, workers):
    def work(j, n):
        return simulate_block(cfg, scheme, substream(master_seed, snr_index, j), n, radius)

    errors = bits = trials = redraws = 0
    sizes = list(_block_sizes(stop, block_size))
    j = 0
    while j < len(sizes):
        wave = range(j, min(j + workers, len(sizes)))
        if pool is None:
            results = (work(i, sizes[i]) for i in wave)
        else:
            results = [pool.submit(work, i, sizes[i]) for i in wave]
        for i, res in zip(wave, results):
            e, b, r = res if pool is None else res.result()
            errors += e
            bits += b
            redraws += r
            trials += sizes[i]
            if stop.done(errors, trials):
                if pool is not None:
                    for f in results:
                        f.cancel()
                return errors, bits, trials, redraws
        j = wave.stop
    return errors, bits, trials, redraws


def run_ber(
    cfg,
    scheme,
    snr_db_list,
    stop=StoppingRule(),
    master_seed=0,
    radius=None,
    workers=None,
    block_size=500,
    tail_min_errors=None,
):
    """Monte Carlo BER curve of one scheme.

    Trials are grouped in blocks of ``block_size``; block ``j`` at SNR index
    ``i`` draws from ``substream(master_seed, i, j)`` and the stopping rule is
    checked after each block in index order, so the curve is identical for
    any worker count. The streams do not depend on the scheme, so different
    schemes see the same channels, bits and noise. ``radius=None`` runs the
    perturbation search unbounded; a finite radius leaves an error floor at
    high SNR.

    With ``tail_min_errors`` set, the curve ends early once a point uses up
    ``max_trials`` with fewer errors than that: points at higher SNR on an
    ascending grid could not be resolved either.
    """
    scheme = SchemeId.parse(scheme)
    snrs = [float(x) for x in snr_db_list]
    if not snrs:
        raise ConfigurationError("SNR grid is empty")
    if block_size < 1:
        raise ConfigurationError("block_size must be positive")
    if radius is not None and radius < 0:
        raise ConfigurationError("radius must be nonnegative")
    workers = worker_count(workers)
    points = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, snr_db in enumerate(snrs):
            point_cfg = cfg.at_snr_db(snr_db)
            e, b, t, r = _run_point(point_cfg, scheme, i, master_seed, stop, radius, block_size, pool, workers)
            if r:
                log.warning("%s @ %.1f dB: %d degenerate channels redrawn", scheme.value, snr_db, r)
            points.append(BerPoint(snr_db, e, b, t, int(master_seed), r))
            if tail_min_errors is not None and t >= stop.max_trials and e < tail_min_errors:
                log.info("%s: stopping after %.1f dB (%d errors at the trial cap)", scheme.value, snr_db, e)
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    meta = {
        "system": cfg.to_dict(),
        "radius": radius,
        "block_size": block_size,
        "stop": asdict(stop),
        "tail_min_errors": tail_min_errors,
    }
    return BerCurve(scheme.value, int(master_seed), tuple(points), meta)


def diversity_slope(curve, tail_points=3, min_errors=1):
    """Least-squares slope of ``log10(BER)`` against SNR, in decades per 10 dB.

    Fits the last ``tail_points`` points that have at least ``min_errors``
    bit errors; points beyond them with fewer errors are dropped with a warning.
    """
    pts = list(curve.points)
    reliable = [i for i, p in enumerate(pts) if p.bit_errors >= min_errors]
    if len(reliable) < len(pts) and reliable and reliable[-1] < len(pts) - 1:
        warnings.warn(f"dropped {len(pts) - 1 - reliable[-1]} tail points below {min_errors} errors", stacklevel=2)
    kept = [pts[i] for i in reliable][-tail_points:]
    if len(kept) < 2:
        raise ValueError("need at least two tail points with nonzero BER")
    x = np.array([p.snr_db for p in kept])
    y = np.log10([p.ber for p in kept])
    return float(np.polyfit(x, y, 1)[0] * 10.0)


def snr_at_ber(curve, target):
    """SNR where the curve first falls to ``target``, interpolating ``log10(BER)`` linearly.

    Returns ``nan`` if the curve never brackets the target.
    """
    x = curve.snr_db
    y = np.log10(np.maximum(curve.ber, 1e-300))
    t = np.log10(target)
    for i in range(len(x) - 1):
        if y[i] >= t >= y[i + 1]:
            if y[i] == y[i + 1]:
                return float(x[i])
            return float(x[i] + (t - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i]))
    return float("nan")
