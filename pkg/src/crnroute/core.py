"""Channel sampling, null-steering beamforming weights and capacity formulas.

All capacities use a base-2 logarithm, so ``capacity_p2p`` and
``capacity_coop`` return bits/s and ``avg_max_capacity`` returns bits/s/Hz.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChannel, GroupTooSmall

# singular values at or below this are treated as zero when splitting
# the PU row space from its null space
SV_CUTOFF = 1e-10
# projection norm below which the cooperative link is unusable
DEGENERATE_NORM = 1e-12

UNBOUNDED = math.inf


@dataclass(frozen=True)
class ChannelModel:
    variance: float = 1.0
    coherence_time: float = 5.0

    def __post_init__(self):
        if not (math.isfinite(self.variance) and self.variance >= 0):
            raise ValueError(f"variance must be finite and >= 0, got {self.variance}")
        if not self.coherence_time > 0:
            raise ValueError(f"coherence_time must be > 0, got {self.coherence_time}")


@dataclass(frozen=True)
class RadioConfig:
    """Secondary-user radio: max transmit power, noise variance, bandwidth."""

    tx_power: float = 1.0
    noise_variance: float = 1.0
    bandwidth: float = 1.5e6

    def __post_init__(self):
        for name in ("tx_power", "noise_variance", "bandwidth"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value}")

    @property
    def snr(self):
        return self.tx_power / self.noise_variance


@dataclass(frozen=True)
class BeamWeights:
    weights: np.ndarray
    # number of PU rows nulled when the weights were computed
    nulled_rows: int = 0

    @property
    def power_sum(self):
        return float(np.sum(np.abs(self.weights) ** 2))

    def gain(self, h_cd):
        """Received power factor |w^H h|^2."""
        return float(abs(np.vdot(self.weights, np.asarray(h_cd))) ** 2)


def sample_channel(rng, model, size=None):
    """Draw circularly-symmetric complex Gaussian coefficients.

    Returns a Python complex when ``size`` is None, otherwise an ndarray.
    """
    scale = math.sqrt(model.variance / 2.0)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    value = scale * (re + 1j * im)
    if size is None:
        return complex(value)
    return value


def capacity_p2p(h, radio):
    return radio.bandwidth * math.log2(1.0 + radio.snr * abs(h) ** 2)


def _null_basis(H_P, n):
    """Orthonormal basis (columns) of Null(H_P) through an SVD."""
    if H_P.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(H_P, full_matrices=True)
    rank = int(np.count_nonzero(s > SV_CUTOFF))
    return vh[rank:].conj().T


def compute_null_weights(H_P, h_cd):
    """Unit-norm weights in Null(H_P) maximising |w^H h_cd|^2.

    The optimum is the normalised orthogonal projection of ``h_cd`` onto the
    null space. Raises GroupTooSmall when the group has no more members than
    constraining PUs and DegenerateChannel when the projection vanishes.
    """
    h_cd = np.asarray(h_cd, dtype=complex).ravel()
    n = h_cd.shape[0]
    H_P = np.asarray(H_P, dtype=complex).reshape(-1, n)
    m = H_P.shape[0]
    if n <= m:
        raise GroupTooSmall(f"group of {n} cannot null {m} PUs")
    basis = _null_basis(H_P, n)
    proj = basis @ (basis.conj().T @ h_cd)
    norm = np.linalg.norm(proj)
    if norm < DEGENERATE_NORM:
        raise DegenerateChannel(f"projection norm {norm:.3e} below {DEGENERATE_NORM}")
    return BeamWeights(proj / norm, nulled_rows=m)


def capacity_coop(weights, h_cd, radio):
    return radio.bandwidth * math.log2(1.0 + radio.snr * weights.gain(h_cd))


def effective_capacity(c_coop, c_wor=UNBOUNDED):
    """Min of the cooperative rate and the worst dissemination rate.

    ``c_wor`` is UNBOUNDED when every member already holds the packet.
    """
    return min(c_coop, c_wor)


def null_power_batch(H_P, h_cd):
    """Max received power factor ||Proj_Null(H) h||^2 for stacks of instances.

    H_P has shape (..., M, N) and h_cd shape (..., N). The row space is
    built by Gram-Schmidt with one re-orthogonalisation pass; a row whose
    residual norm falls below the singular-value cutoff adds no dimension,
    so zero rows (PUs out of range) and zero columns (non-members) are
    handled naturally. Much cheaper than a batched SVD for the few-row
    matrices met here.
    """
    H_P = np.asarray(H_P, dtype=complex)
    h_cd = np.asarray(h_cd, dtype=complex)
    total = np.sum(np.abs(h_cd) ** 2, axis=-1)
    m = H_P.shape[-2]
    if m == 0:
        return total
    basis = []
    row_space = np.zeros(np.broadcast_shapes(total.shape, H_P.shape[:-2]))
    for k in range(m):
        # Null(H) is the orthogonal complement of the conjugated rows
        r = np.conj(H_P[..., k, :])
        for _ in range(2):
            for q in basis:
                r = r - np.sum(np.conj(q) * r, axis=-1, keepdims=True) * q
        norm = np.sqrt(np.sum(np.abs(r) ** 2, axis=-1))
        keep = norm > SV_CUTOFF
        q = np.where(keep[..., None], r / np.where(keep, norm, 1.0)[..., None], 0.0)
        basis.append(q)
        row_space = row_space + np.abs(np.sum(np.conj(q) * h_cd, axis=-1)) ** 2
    return np.maximum(total - row_space, 0.0)


def capacity_curve(max_size, pu_count, samples, rng, model=ChannelModel(), radio=RadioConfig()):
    """Mean max capacity (bits/s/Hz) for group sizes pu_count+1 .. max_size.

    Each draw is shared across sizes (a size-j group uses the first j
    members), so the curve is monotone sample by sample.
    """
    if max_size <= pu_count:
        raise GroupTooSmall(f"max_size {max_size} <= pu_count {pu_count}")
    H = sample_channel(rng, model, (samples, pu_count, max_size))
    h = sample_channel(rng, model, (samples, max_size))
    curve = {}
    for n in range(pu_count + 1, max_size + 1):
        power = null_power_batch(H[:, :, :n], h[:, :n])
        # degenerate draws carry no usable link
        power = np.where(power < DEGENERATE_NORM**2, 0.0, power)
        curve[n] = float(np.mean(np.log2(1.0 + radio.snr * power)))
    return curve


def avg_max_capacity(n, pu_count, samples, rng, model=ChannelModel(), radio=RadioConfig()):
    """Monte Carlo mean of the best null-steered capacity per Hz."""
    if n <= pu_count:
        raise GroupTooSmall(f"group of {n} cannot null {pu_count} PUs")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    H = sample_channel(rng, model, (samples, pu_count, n))
    h = sample_channel(rng, model, (samples, n))
    power = null_power_batch(H, h)
    power = np.where(power < DEGENERATE_NORM**2, 0.0, power)
    return float(np.mean(np.log2(1.0 + radio.snr * power)))
