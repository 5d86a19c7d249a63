"""4-QAM mapping, integer-lattice vector perturbation and the modulo receiver.

Symbols live at ``(+-1 +- 1j) / 2`` and the perturbation lattice is
``A (Z + jZ)`` with ``A = 2``, so every constellation point sits strictly
inside the fundamental square ``[-1, 1)^2`` and no two points are congruent.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import _sphere
from .numeric import svd

__all__ = [
    "QAM4",
    "Constellation",
    "PerturbationSolution",
    "DEFAULT_RADIUS",
    "gamma_of",
    "gamma_via_svd",
    "lattice_real_form",
    "modulo_fold",
    "perturb",
    "perturb_batch",
    "perturb_exhaustive",
    "qam_demodulate",
    "qam_modulate",
]

DEFAULT_RADIUS = 2


@dataclass(frozen=True)
class Constellation:
    """A QAM alphabet with a Gray labeling and its perturbation lattice step.

    ``points[i]`` carries the label ``bit_map[i]`` (most significant bit first).
    """

    order: int
    points: np.ndarray
    bit_map: np.ndarray
    lattice_step: float

    @property
    def bits_per_symbol(self):
        return self.bit_map.shape[1]

    @property
    def mean_energy(self):
        return float(np.mean(np.abs(self.points) ** 2))


def _qam4():
    bits = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.int8)
    points = np.array([0.5 + 0.5j, -0.5 + 0.5j, -0.5 - 0.5j, 0.5 - 0.5j])
    # ascending (real, imag) so argmin's first-hit rule implements the tie-break
    idx = np.lexsort((points.imag, points.real))
    return Constellation(order=4, points=points[idx], bit_map=bits[idx], lattice_step=2.0)


QAM4 = _qam4()


def _label_table(c):
    width = c.bits_per_symbol
    weights = 1 << np.arange(width - 1, -1, -1)
    table = np.empty(c.order, dtype=np.int64)
    table[c.bit_map @ weights] = np.arange(c.order)
    return table, weights


def qam_modulate(bits, c=QAM4):
    """Map bits (last axis) to symbols with the constellation's Gray labels.

    ``00 -> (1+1j)/2``, ``01 -> (-1+1j)/2``, ``11 -> (-1-1j)/2``,
    ``10 -> (1-1j)/2``.
    """
    bits = np.asarray(bits)
    width = c.bits_per_symbol
    if bits.ndim == 0 or bits.shape[-1] % width:
        raise ValueError(
            f"bit count {bits.shape[-1] if bits.ndim else 0} is not a multiple of {width}"
        )
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    table, weights = _label_table(c)
    groups = bits.reshape(bits.shape[:-1] + (-1, width)).astype(np.int64)
    return c.points[table[groups @ weights]]


def qam_demodulate(symbols, c=QAM4):
    """Nearest-point hard decisions, returned as bits along the last axis.

    Exact ties go to the point with the smaller real part, then the smaller
    imaginary part.
    """
    y = np.asarray(symbols, dtype=np.complex128)
    d = np.abs(y[..., None] - c.points) ** 2
    idx = np.argmin(d, axis=-1)
    bits = c.bit_map[idx]
    return bits.reshape(y.shape[:-1] + (-1,)) if y.ndim else bits


def modulo_fold(y, a):
    """Fold real and imaginary parts independently into ``[-a/2, a/2)``."""
    if not a > 0:
        raise ValueError("lattice step must be positive")
    y = np.asarray(y, dtype=np.complex128)

    def fold(x):
        return x - a * np.floor(x / a + 0.5)

    return fold(y.real) + 1j * fold(y.imag)


def gamma_of(s_tilde, h_eff_inv):
    """Transmit-power normalization ``||H_eff^-1 s~||^2``."""
    x = np.asarray(h_eff_inv) @ np.asarray(s_tilde)
    return float(np.sum(x.real**2 + x.imag**2))


def gamma_via_svd(s_tilde, h_eff):
    """Same quantity via the left singular vectors: ``sum(xi_l^2 / lambda_l^2)``."""
    f = svd(h_eff)
    xi = np.abs(f.u.conj().T @ np.asarray(s_tilde))
    return float(np.sum(xi**2 / f.sigma**2))


@dataclass(frozen=True)
class PerturbationSolution:
    """Chosen lattice offset ``p`` (in ``A (Z + jZ)``), ``s~ = s + p`` and its power ``gamma``.

    ``coefficients`` holds the integer vector ``[Re(p) / A, Im(p) / A]``.
    """

    p: np.ndarray
    s_tilde: np.ndarray
    gamma: float
    coefficients: np.ndarray
    candidates_examined: int


def lattice_real_form(s, h_eff_inv, a):
    """Real-valued problem ``||t + B c||^2`` equivalent to ``||G (s + a (c_re + j c_im))||^2``.

    Works on single problems or on stacks (leading axes are batch axes).
    """
    g = np.asarray(h_eff_inv, dtype=np.complex128)
    gs = np.einsum("...ij,...j->...i", g, np.asarray(s, dtype=np.complex128))
    t = np.concatenate([gs.real, gs.imag], axis=-1)
    top = np.concatenate([g.real, -g.imag], axis=-1)
    bottom = np.concatenate([g.imag, g.real], axis=-1)
    b = a * np.concatenate([top, bottom], axis=-2)
    return np.ascontiguousarray(b), np.ascontiguousarray(t)


def _radius_arg(radius):
    if radius is None:
        return _sphere.UNBOUNDED
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return int(radius)


def _solution(s, g, coeff, a, examined):
    n = s.shape[0]
    p = a * (coeff[:n] + 1j * coeff[n:])
    s_tilde = s + p
    return PerturbationSolution(
        p=p,
        s_tilde=s_tilde,
        gamma=gamma_of(s_tilde, g),
        coefficients=coeff.astype(np.int64),
        candidates_examined=int(examined),
    )


def perturb(s, h_eff_inv, c=QAM4, radius=DEFAULT_RADIUS):
    """Minimum-power perturbation ``argmin_p ||H_eff^-1 (s + p)||^2``.

    The search covers every lattice offset whose real and imaginary integer
    coefficients lie in ``[-radius, radius]`` (the whole lattice for
    ``radius=None``); it returns the same point as exhaustive enumeration,
    including the lexicographic tie-break on the coefficient vector (real
    parts first).
    """
    s = np.asarray(s, dtype=np.complex128)
    g = np.asarray(h_eff_inv, dtype=np.complex128)
    if g.shape != (s.shape[0], s.shape[0]):
        raise ValueError(f"inverse channel {g.shape} does not match {s.shape[0]} streams")
    b, t = lattice_real_form(s, g, c.lattice_step)
    coeff = np.zeros(2 * s.shape[0], dtype=np.int64)
    examined = _sphere.solve_one(b, t, _radius_arg(radius), coeff)
    return _solution(s, g, coeff, c.lattice_step, examined)


def perturb_batch(s, h_eff_inv, c=QAM4, radius=DEFAULT_RADIUS):
    """Vectorized :func:`perturb` over leading axes.

    Returns ``(s_tilde, coefficients)`` with ``s_tilde`` shaped like ``s``.
    """
    s = np.asarray(s, dtype=np.complex128)
    lead = s.shape[:-1]
    n = s.shape[-1]
    b, t = lattice_real_form(s, h_eff_inv, c.lattice_step)
    bs = b.reshape(-1, 2 * n, 2 * n)
    ts = t.reshape(-1, 2 * n)
    coeff = np.zeros((bs.shape[0], 2 * n), dtype=np.int64)
    leaves = np.zeros(bs.shape[0], dtype=np.int64)
    _sphere.solve_batch(bs, ts, _radius_arg(radius), coeff, leaves)
    coeff = coeff.reshape(lead + (2 * n,))
    s_tilde = s + c.lattice_step * (coeff[..., :n] + 1j * coeff[..., n:])
    return s_tilde, coeff


def perturb_exhaustive(s, h_eff_inv, c=QAM4, radius=DEFAULT_RADIUS):
    """Brute-force reference for :func:`perturb`: evaluates every candidate."""
    s = np.asarray(s, dtype=np.complex128)
    g = np.asarray(h_eff_inv, dtype=np.complex128)
    n = s.shape[0]
    grid = np.array(list(itertools.product(range(-radius, radius + 1), repeat=2 * n)), dtype=np.int64)
    offsets = c.lattice_step * (grid[:, :n] + 1j * grid[:, n:])
    x = (s + offsets) @ g.T
    values = np.sum(x.real**2 + x.imag**2, axis=1)
    best = values.min()
    # product() yields candidates in lexicographic order
    idx = int(np.flatnonzero(values <= best * (1.0 + _sphere.TIE_RTOL))[0])
    return _solution(s, g, grid[idx], c.lattice_step, grid.shape[0])
