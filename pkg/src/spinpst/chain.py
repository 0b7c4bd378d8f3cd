"""Chain geometry, coupling constants, and excitation-sector Hamiltonian blocks.

The model is the XX flip-flop Hamiltonian with all-to-all couplings D_ij:
the matrix element between two k-excitation states that differ by moving one
excitation from site i to site j is D_ij / 2, the diagonal is zero.  Couplings
are nondimensionalized so the reference nearest-neighbor coupling is 1 and
time is measured in units of its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SectorBasis, full_basis, k_states

FULL_SPACE_GUARD = 14


class InvalidSpecError(ValueError):
    """Chain specification violates an invariant."""


@dataclass(frozen=True)
class ChainSpec:
    """Geometry and coupling model of a 1-D spin-1/2 chain.

    Exactly one geometry source applies:

    * default: unit-spaced sites (homogeneous chain),
    * ``positions``: explicit, strictly increasing site coordinates,
    * ``nn_overrides``: nearest-neighbor coupling values keyed by the 1-based
      left site of the bond; converted to inter-site distances r = D**(-1/3)
      so that all long-range couplings stay dipole-consistent,
    * ``matrix``: explicit full coupling matrix (``coupling_model="explicit"``).
    """

    n_sites: int
    coupling_model: str = "dipole"              # "dipole" | "explicit"
    positions: tuple[float, ...] | None = None
    nn_overrides: dict[int, float] | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.n_sites < 2:
            raise InvalidSpecError(f"need at least 2 sites, got {self.n_sites}")
        if self.coupling_model not in ("dipole", "explicit"):
            raise InvalidSpecError(f"unknown coupling model {self.coupling_model!r}")
        if self.coupling_model == "explicit":
            if self.matrix is None:
                raise InvalidSpecError("explicit coupling model requires a matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.n_sites, self.n_sites):
                raise InvalidSpecError(f"coupling matrix shape {m.shape} does not "
                                       f"match n_sites={self.n_sites}")
            if not np.allclose(m, m.T):
                raise InvalidSpecError("coupling matrix must be symmetric")
            if np.any(np.diag(m) != 0):
                raise InvalidSpecError("coupling matrix must have zero diagonal")
            off = m[~np.eye(self.n_sites, dtype=bool)]
            if np.any(off < 0):
                raise InvalidSpecError("couplings must be nonnegative")
        else:
            if self.positions is not None and self.nn_overrides is not None:
                raise InvalidSpecError("give either positions or nn_overrides, not both")
            if self.positions is not None:
                p = tuple(float(x) for x in self.positions)
                if len(p) != self.n_sites:
                    raise InvalidSpecError("positions length must equal n_sites")
                if any(b <= a for a, b in zip(p, p[1:])):
                    raise InvalidSpecError("positions must be strictly increasing")
            if self.nn_overrides is not None:
                for i, d in self.nn_overrides.items():
                    if not 1 <= i <= self.n_sites - 1:
                        raise InvalidSpecError(f"override bond {i}-{i + 1} out of range")
                    if d <= 0:
                        raise InvalidSpecError(f"override coupling for bond {i}-{i + 1} "
                                               "must be positive")


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric nonnegative coupling constants with zero diagonal."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "d", d)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidSpecError("coupling matrix must be square")
        if not np.array_equal(d, d.T):
            raise InvalidSpecError("coupling matrix must be exactly symmetric")
        if np.any(np.diag(d) != 0):
            raise InvalidSpecError("coupling matrix diagonal must be zero")

    @property
    def n_sites(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class Partition:
    """Sender / transmission-line / receiver split of the chain.

    Layout: sender S = sites 1..n_s, receiver R = the last n_r sites,
    extended receiver ER = the last n_er sites (so A = ER minus R), and
    TL = everything between S and R.  Optional contiguous subranges S0 and
    R0 inside TL carry the input/output registers of the encoded protocol.
    All sites are 1-based.
    """

    n_sites: int
    n_s: int
    n_r: int
    n_er: int
    s0_sites: tuple[int, ...] = ()
    r0_sites: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "s0_sites", tuple(self.s0_sites))
        object.__setattr__(self, "r0_sites", tuple(self.r0_sites))
        if self.n_er < self.n_r:
            raise InvalidSpecError("extended receiver must contain the receiver")
        if self.n_s + self.n_er > self.n_sites:
            raise InvalidSpecError("sender and extended receiver overlap")
        if self.n_r != self.n_s:
            raise InvalidSpecError("restoring assumes equal sender and receiver size")
        tl = set(self.tl_sites)
        for name, sites in (("S0", self.s0_sites), ("R0", self.r0_sites)):
            if not set(sites) <= tl:
                raise InvalidSpecError(f"{name} sites {sites} must lie inside TL {sorted(tl)}")
        if set(self.s0_sites) & set(self.r0_sites):
            raise InvalidSpecError("S0 and R0 must be disjoint")

    @property
    def sender_sites(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_s + 1))

    @property
    def receiver_sites(self) -> tuple[int, ...]:
        return tuple(range(self.n_sites - self.n_r + 1, self.n_sites + 1))

    @property
    def er_sites(self) -> tuple[int, ...]:
        return tuple(range(self.n_sites - self.n_er + 1, self.n_sites + 1))

    @property
    def a_sites(self) -> tuple[int, ...]:
        return tuple(range(self.n_sites - self.n_er + 1, self.n_sites - self.n_r + 1))

    @property
    def tl_sites(self) -> tuple[int, ...]:
        return tuple(range(self.n_s + 1, self.n_sites - self.n_r + 1))


def build_couplings(spec: ChainSpec) -> CouplingMatrix:
    """Assemble the coupling matrix for a chain specification.

    Dipole model: D_ij = 1 / r_ij**3 from site positions.  Nearest-neighbor
    overrides are realized as adjusted inter-site distances, keeping every
    long-range coupling consistent with the dipole law.
    """
    n = spec.n_sites
    if spec.coupling_model == "explicit":
        return CouplingMatrix(d=np.asarray(spec.matrix, dtype=float).copy())
    if spec.positions is not None:
        pos = np.asarray(spec.positions, dtype=float)
    elif spec.nn_overrides:
        gaps = np.ones(n - 1)
        for i, d in spec.nn_overrides.items():
            gaps[i - 1] = d ** (-1.0 / 3.0)
        pos = np.concatenate([[0.0], np.cumsum(gaps)])
    else:
        pos = np.arange(n, dtype=float)
    r = np.abs(pos[:, None] - pos[None, :])
    if np.any(r[~np.eye(n, dtype=bool)] <= 0):
        raise InvalidSpecError("coincident site positions")
    with np.errstate(divide="ignore"):
        d = 1.0 / r ** 3
    np.fill_diagonal(d, 0.0)
    d = (d + d.T) / 2.0  # exact symmetry despite rounding
    return CouplingMatrix(d=d)


def direct_override_matrix(n_sites: int, nn_overrides: dict[int, float]) -> np.ndarray:
    """Unit-spaced dipole matrix with listed nearest-neighbor entries replaced.

    Alternative reading of "adjusted coupling constants": the overrides patch
    D_{i,i+1} directly while all other pairs keep the unit-spacing dipole value.
    """
    pos = np.arange(n_sites, dtype=float)
    r = np.abs(pos[:, None] - pos[None, :])
    with np.errstate(divide="ignore"):
        d = 1.0 / r ** 3
    np.fill_diagonal(d, 0.0)
    for i, v in nn_overrides.items():
        if not 1 <= i <= n_sites - 1:
            raise InvalidSpecError(f"override bond {i}-{i + 1} out of range")
        if v <= 0:
            raise InvalidSpecError("override coupling must be positive")
        d[i - 1, i] = d[i, i - 1] = v
    return d


def hamiltonian_block(couplings: CouplingMatrix, k: int,
                      basis: SectorBasis | None = None) -> np.ndarray:
    """k-excitation block of the XX Hamiltonian in the sector basis.

    Element between states differing by one excitation hop i -> j is D_ij/2;
    everything else (including the diagonal) is zero, so the output is a real
    symmetric matrix returned as complex Hermitian.
    """
    n = couplings.n_sites
    if basis is None:
        basis = k_states(n, k)
    if basis.n != n or basis.k != k:
        raise ValueError(f"basis is for (n={basis.n}, k={basis.k}), "
                         f"expected (n={n}, k={k})")
    dim = len(basis)
    h = np.zeros((dim, dim), dtype=complex)
    d = couplings.d
    for a, m in enumerate(basis.states):
        occ = [q for q in range(n) if (m >> q) & 1]
        for i in occ:
            for j in range(n):
                if (m >> j) & 1 or j == i:
                    continue
                b = basis.index_of((m ^ (1 << i)) | (1 << j))
                h[b, a] += d[i, j] / 2.0
    return h


def hamiltonian_full(couplings: CouplingMatrix) -> np.ndarray:
    """Direct sum of all sector blocks in the excitation-sorted full basis."""
    n = couplings.n_sites
    if n > FULL_SPACE_GUARD:
        raise ValueError(f"dense full-space assembly guarded to n <= {FULL_SPACE_GUARD}")
    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=complex)
    off = 0
    for k in range(n + 1):
        blk = hamiltonian_block(couplings, k)
        sz = blk.shape[0]
        h[off:off + sz, off:off + sz] = blk
        off += sz
    assert off == dim
    return h


def excitation_sort_permutation(n: int) -> np.ndarray:
    """Permutation p with p[j] = computational-basis index of excitation-sorted state j."""
    return np.fromiter(full_basis(n), dtype=np.int64)
