"""Explicit quench Hamiltonians: GOE matrices and a disordered spin chain.

GOE convention: ``H = (A + A^T)/2`` with ``A`` i.i.d. standard normal, so the
off-diagonal variance is 1/2 and the diagonal variance 1.  The semicircle
radius is then ``sqrt(2 N)``.

Spin chain: ``H = H0 + g V`` on the Sz = 0 sector of ``L`` spin-1/2 sites with
periodic boundary conditions.  ``H0 = sum_j h_j s^z_j`` carries the on-site
disorder (``h_j`` uniform on ``[-h, h]``); ``V = sum_<ij> s_i . s_j`` over
nearest-neighbour bonds contributes ``+-1/4`` zz diagonal terms and ``1/2``
flip-flop elements between states differing by one adjacent exchange.
Spin-1/2 operators throughout (``s^z`` eigenvalues ``+-1/2``), not Pauli
matrices.

Basis layout: all bitmasks with exactly ``L/2`` set bits, sorted ascending as
integers; site 1 is the least significant bit.  The domain wall has sites
``1..L/2`` up, i.e. mask ``(1 << (L/2)) - 1``.

Randomness: every draw comes from ``numpy.random.Philox`` keyed with
``(seed, stream)``.  A fixed ``(seed, stream)`` pair reproduces the same
matrix bit-for-bit regardless of how many realizations run concurrently;
ensemble drivers enumerate ``stream`` as a plain counter.
"""
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NormalizationError
from .models import LdosSummary

BINARY_MAGIC = b"KSH1"
# magic, u32 dimension, 8 reserved bytes
_HEADER = struct.Struct("<4sI8x")

MAX_CHAIN_SITES = 20


def _generator(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SpinChainSpec:
    """Disordered periodic Heisenberg chain restricted to Sz = 0."""

    L: int
    h: float
    g: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 2 \
                or self.L % 2:
            raise DomainError(f"L must be an even integer >= 2, got {self.L}")
        if self.L > MAX_CHAIN_SITES:
            raise DomainError(
                f"L={self.L} exceeds the dense-sector guard "
                f"(L <= {MAX_CHAIN_SITES})")
        if not (math.isfinite(self.h) and self.h >= 0):
            raise DomainError(f"h must be finite and >= 0, got {self.h}")
        if not math.isfinite(self.g):
            raise DomainError(f"g must be finite, got {self.g}")

    @property
    def dimension(self) -> int:
        return math.comb(self.L, self.L // 2)


@dataclass
class SectorHamiltonian:
    """Dense real symmetric Hamiltonian with its basis labels.

    ``basis`` holds up-spin bitmasks for spin chains and plain indices for
    GOE matrices.  ``meta`` records provenance (seed, parameters).
    """

    H: np.ndarray
    basis: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.basis = np.asarray(self.basis)
        if self.H.ndim != 2 or self.H.shape[0] != self.H.shape[1]:
            raise DomainError(f"H must be square, got shape {self.H.shape}")
        if len(self.basis) != self.H.shape[0]:
            raise DomainError(
                f"basis length {len(self.basis)} does not match "
                f"dimension {self.H.shape[0]}")
        if not np.array_equal(self.H, self.H.T):
            raise DomainError("H must be symmetric bit-exactly")

    @property
    def dimension(self) -> int:
        return self.H.shape[0]


@dataclass
class StateVector:
    """Unit-norm state in a sector basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        if self.amplitudes.ndim != 1:
            raise DomainError("amplitudes must be one-dimensional")
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise NormalizationError(
                f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")

    @property
    def dimension(self) -> int:
        return self.amplitudes.shape[0]


def sample_goe(n: int, seed: int, stream: int = 0) -> SectorHamiltonian:
    """Draw one GOE matrix: off-diagonal variance 1/2, diagonal variance 1."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {n}")
    gen = _generator(seed, stream)
    raw = gen.standard_normal((n, n))
    # elementwise (raw + raw.T) is symmetric bit-exactly
    ham = (raw + raw.T) / 2.0
    meta = {"kind": "goe", "n": int(n), "seed": int(seed),
            "stream": int(stream)}
    return SectorHamiltonian(ham, np.arange(n), meta)


def _popcount(masks: np.ndarray) -> np.ndarray:
    v = masks.astype(np.uint32)
    v = v - ((v >> 1) & np.uint32(0x55555555))
    v = (v & np.uint32(0x33333333)) + ((v >> 2) & np.uint32(0x33333333))
    v = (v + (v >> 4)) & np.uint32(0x0F0F0F0F)
    return ((v * np.uint32(0x01010101)) >> 24).astype(np.int64)


def sector_basis(L: int) -> np.ndarray:
    """Ascending bitmasks with exactly L/2 set bits (site 1 = LSB)."""
    masks = np.arange(1 << L, dtype=np.int64)
    return masks[_popcount(masks) == L // 2]


def _chain_bonds(L: int):
    # periodic ring; for L=2 the wrap-around duplicates the only bond
    bonds = [(i, (i + 1) % L) for i in range(L)]
    return bonds[:1] if L == 2 else bonds


def build_spin_sector(spec: SpinChainSpec, stream: int = 0) \
        -> SectorHamiltonian:
    """Assemble H = H0 + g V on the Sz = 0 sector of the chain."""
    L = spec.L
    basis = sector_basis(L)
    dim = basis.size
    gen = _generator(spec.seed, stream)
    fields_h = gen.uniform(-spec.h, spec.h, size=L)

    ham = np.zeros((dim, dim))
    diag = np.zeros(dim)
    bits = [(basis >> site) & 1 for site in range(L)]
    for site in range(L):
        diag += fields_h[site] * (bits[site] - 0.5)
    for i, j in _chain_bonds(L):
        aligned = bits[i] == bits[j]
        diag += spec.g * np.where(aligned, 0.25, -0.25)
        rows = np.nonzero(~aligned)[0]
        partners = basis[rows] ^ ((1 << i) | (1 << j))
        cols = np.searchsorted(basis, partners)
        ham[rows, cols] += spec.g * 0.5
    ham[np.arange(dim), np.arange(dim)] = diag

    if not np.array_equal(ham, ham.T):
        raise RuntimeError("sector assembly produced an asymmetric matrix")
    meta = {"kind": "spin_chain", "L": int(L), "h": float(spec.h),
            "g": float(spec.g), "seed": int(spec.seed),
            "stream": int(stream), "fields": fields_h.tolist()}
    return SectorHamiltonian(ham, basis, meta)


def domain_wall_state(spec: SpinChainSpec) -> StateVector:
    """Unit vector on the basis label with sites 1..L/2 up, rest down."""
    basis = sector_basis(spec.L)
    mask = (1 << (spec.L // 2)) - 1
    idx = int(np.searchsorted(basis, mask))
    if idx >= basis.size or basis[idx] != mask:
        raise RuntimeError(
            f"domain-wall mask {mask:#x} missing from the sector basis")
    amplitudes = np.zeros(basis.size)
    amplitudes[idx] = 1.0
    return StateVector(amplitudes)


def ldos_summary(ham, psi0):
    """Mean and variance of the LDOS from two matrix-vector products."""
    matrix = ham.H if isinstance(ham, SectorHamiltonian) else np.asarray(ham)
    vec = psi0.amplitudes if isinstance(psi0, StateVector) \
        else np.asarray(psi0)
    if matrix.shape[0] != vec.shape[0]:
        raise DomainError(
            f"dimension mismatch: H is {matrix.shape[0]}, state is "
            f"{vec.shape[0]}")
    hpsi = matrix @ vec
    e0 = float(np.real(np.vdot(vec, hpsi)))
    second = float(np.real(np.vdot(hpsi, hpsi)))
    var = second - e0 ** 2
    if var < 0:
        var = 0.0
    return LdosSummary(e0=e0, sigma0=math.sqrt(var))


def write_matrix_binary(matrix, path) -> None:
    """Row-major lower triangle, float64 little-endian, 16-byte header."""
    matrix = matrix.H if isinstance(matrix, SectorHamiltonian) \
        else np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    tri = matrix[np.tril_indices(n)].astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, n))
        fh.write(tri.tobytes())


def read_matrix_binary(path) -> np.ndarray:
    """Inverse of write_matrix_binary; reconstructs the full symmetric H."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise DomainError(f"{path}: truncated header")
        magic, n = _HEADER.unpack(header)
        if magic != BINARY_MAGIC:
            raise DomainError(f"{path}: bad magic {magic!r}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    expected = n * (n + 1) // 2
    if payload.size != expected:
        raise DomainError(
            f"{path}: expected {expected} triangle entries, got "
            f"{payload.size}")
    ham = np.zeros((n, n))
    ham[np.tril_indices(n)] = payload
    upper = np.triu_indices(n, k=1)
    ham[upper] = ham.T[upper]
    return ham


def write_matrix_csv(matrix, path) -> None:
    """Dense CSV dump for small instances (one row per line, %.17g)."""
    matrix = matrix.H if isinstance(matrix, SectorHamiltonian) \
        else np.asarray(matrix, dtype=float)
    np.savetxt(path, matrix, delimiter=",", fmt="%.17g")
