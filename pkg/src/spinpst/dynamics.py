"""Sector propagators and the sender-to-extended-receiver transfer block.

One Hermitian eigendecomposition per (chain, k) pair serves every evaluation
time: V(tau) = U exp(-i Lambda tau) U^dag.  The transfer block collects the
propagator elements between "all excitations in the sender" and "all
excitations in the extended receiver" states, both in sector-basis order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import SectorBasis, embed_subsystem, k_states
from .chain import CouplingMatrix, Partition, hamiltonian_block

HERMITICITY_TOL = 1e-10


@dataclass(frozen=True)
class SectorEigensystem:
    """Eigenvalues and eigenvectors of one k-sector Hamiltonian block."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class TransferBlock:
    """Complex N^(ER)_k x N^(S)_k block mapping sender to ER amplitudes."""

    v_hat: np.ndarray
    tau: float
    n_sites: int
    n_s: int
    n_er: int
    k: int

    @property
    def columns(self) -> int:
        return self.v_hat.shape[1]

    @property
    def rows(self) -> int:
        return self.v_hat.shape[0]


def eigendecompose(h_block: np.ndarray) -> SectorEigensystem:
    """Diagonalize a Hermitian sector block."""
    h = np.asarray(h_block, dtype=complex)
    asym = np.abs(h - h.conj().T).max() if h.size else 0.0
    if asym > HERMITICITY_TOL:
        raise ValueError(f"input is not Hermitian (max asymmetry {asym:.2e})")
    evals, evecs = np.linalg.eigh(h)
    return SectorEigensystem(eigenvalues=evals, eigenvectors=evecs)


def propagator(eig: SectorEigensystem, tau: float) -> np.ndarray:
    """Unitary sector propagator at dimensionless time tau."""
    if not np.isfinite(tau):
        raise ValueError(f"tau must be finite, got {tau}")
    u = eig.eigenvectors
    phases = np.exp(-1j * eig.eigenvalues * tau)
    return (u * phases) @ u.conj().T


def sector_eigensystem(couplings: CouplingMatrix, k: int) -> SectorEigensystem:
    """Eigendecomposition of the k-sector block of a chain's Hamiltonian."""
    return eigendecompose(hamiltonian_block(couplings, k))


def transfer_block(v_k: np.ndarray, partition: Partition, k: int,
                   tau: float = float("nan"),
                   basis: SectorBasis | None = None) -> TransferBlock:
    """Extract the S -> ER block from a full k-sector propagator matrix.

    Rows are indexed by ER-local k-states (all excitations inside the extended
    receiver, rest of the chain ground), columns by sender-local k-states,
    both in sector-basis order.
    """
    n = partition.n_sites
    if basis is None:
        basis = k_states(n, k)
    if v_k.shape != (len(basis), len(basis)):
        raise ValueError(f"propagator shape {v_k.shape} does not match "
                         f"sector dimension {len(basis)}")
    s_map = embed_subsystem(partition.sender_sites, n, k)
    er_map = embed_subsystem(partition.er_sites, n, k)
    v_hat = v_k[np.ix_(er_map.chain_ordinals, s_map.chain_ordinals)]
    return TransferBlock(v_hat=v_hat, tau=tau, n_sites=n,
                         n_s=partition.n_s, n_er=partition.n_er, k=k)


class TransferMap:
    """Cached evaluator of the transfer block over many registration times.

    Keeps only the eigenvector rows needed for the block, so a single
    eigendecomposition supports dense tau scans at O(dim * block) per point.
    """

    def __init__(self, couplings: CouplingMatrix, partition: Partition, k: int):
        self.partition = partition
        self.k = k
        self.eig = sector_eigensystem(couplings, k)
        n = partition.n_sites
        s_map = embed_subsystem(partition.sender_sites, n, k)
        er_map = embed_subsystem(partition.er_sites, n, k)
        u = self.eig.eigenvectors
        self._u_er = u[np.asarray(er_map.chain_ordinals), :]
        self._u_s_conj = u[np.asarray(s_map.chain_ordinals), :].conj()

    @property
    def n_er_k(self) -> int:
        return self._u_er.shape[0]

    @property
    def n_s_k(self) -> int:
        return self._u_s_conj.shape[0]

    def v_hat(self, tau: float) -> TransferBlock:
        phases = np.exp(-1j * self.eig.eigenvalues * tau)
        block = (self._u_er * phases) @ self._u_s_conj.T
        return TransferBlock(v_hat=block, tau=float(tau),
                             n_sites=self.partition.n_sites,
                             n_s=self.partition.n_s,
                             n_er=self.partition.n_er, k=self.k)

    def gram_batch(self, taus: np.ndarray) -> np.ndarray:
        """Gram matrices V^dag V of the transfer block, one per tau."""
        phases = np.exp(-1j * np.outer(taus, self.eig.eigenvalues))
        blocks = np.einsum("ra,ta,sa->trs", self._u_er, phases, self._u_s_conj)
        return np.einsum("tri,trj->tij", blocks.conj(), blocks)
