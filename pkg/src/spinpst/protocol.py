"""End-to-end state-transfer protocols with ancilla labeling and post-selection.

The fixed-excitation protocol runs in the chain k-sector tensored with the
flag ancilla B; the encoded (arbitrary-state) and non-preserving variants run
over the full 2**n computational space with explicit guards.  Controlled
operators are applied as exact basis maps: a multi-controlled flip toggles an
ancilla (or register pattern) on every basis state whose control pattern is
fully excited, with parity semantics so the map stays unitary off-sector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import binom, k_states
from .chain import CouplingMatrix, Partition
from .dynamics import SectorEigensystem, propagator, sector_eigensystem
from .restore import RestoreSolution, wer_full_from_solution

FULL_GUARD = 14


@dataclass(frozen=True)
class BasisDescriptor:
    kind: str                      # "sector" | "full"
    n: int
    k: int | None
    ancillas: tuple[str, ...] = ()

    @property
    def chain_dim(self) -> int:
        return binom(self.n, self.k) if self.kind == "sector" else 2 ** self.n


@dataclass(frozen=True)
class PureState:
    """Normalized amplitudes over a chain basis and optional ancilla qubits.

    Shape is (chain_dim, 2, 2, ...) with one trailing axis per ancilla, in
    ``basis.ancillas`` order.
    """

    amplitudes: np.ndarray
    basis: BasisDescriptor

    def __post_init__(self):
        expect = (self.basis.chain_dim,) + (2,) * len(self.basis.ancillas)
        if self.amplitudes.shape != expect:
            raise ValueError(f"amplitude shape {self.amplitudes.shape} does not "
                             f"match basis {expect}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class CostEstimate:
    """Symbolic per-component operation counts (unit constants, no wall clock)."""

    encode_depth: int
    label_depth: int
    wer_depth: int
    t0: float
    runs_expected: int | None


@dataclass(frozen=True)
class ProtocolReport:
    variant: str
    success_probability: float
    fidelity: float
    output_amplitudes: np.ndarray
    lambda_expected: complex
    garbage_norm: float
    cost: CostEstimate

    def to_dict(self, chain_id: str = "", k: int | None = None,
                tau0: float | None = None, seed: int | None = None,
                epsilon: float = 0.01) -> dict:
        amp = None
        if 0.0 < self.success_probability < 1.0:
            amp = amplification_runs(self.success_probability, epsilon)
        return {
            "variant": self.variant,
            "chain_id": chain_id,
            "k": k,
            "tau0": tau0,
            "lambda": {"abs": abs(self.lambda_expected),
                       "arg": float(np.angle(self.lambda_expected))},
            "success_probability": self.success_probability,
            "fidelity": self.fidelity,
            "runs_expected": self.cost.runs_expected,
            "amplification": {"epsilon": epsilon, "M": amp},
            "seed": seed,
        }


# ---------------------------------------------------------------------------
# bit bookkeeping (site q <-> bit q-1 of the computational index)
# ---------------------------------------------------------------------------

def _sites_mask(sites) -> int:
    m = 0
    for q in sites:
        m |= 1 << (q - 1)
    return m


def _value_mask(value: int, sites) -> int:
    """Computational mask of register value ``value`` laid out on ``sites``."""
    m = 0
    for b, q in enumerate(sites):
        if (value >> b) & 1:
            m |= 1 << (q - 1)
    return m


def _pattern_masks(sub_sites, n_local: int, k: int) -> list[int]:
    """Chain masks of the subsystem k-patterns, in subsystem k-basis order."""
    out = []
    for m in k_states(n_local, k).states:
        cm = 0
        for b in range(n_local):
            if (m >> b) & 1:
                cm |= 1 << (sub_sites[b] - 1)
        out.append(cm)
    return out


# ---------------------------------------------------------------------------
# state preparation and measurement
# ---------------------------------------------------------------------------

def prepare_k_state(s, partition: Partition, k: int) -> PureState:
    """Chain k-sector state with sender amplitudes ``s`` and the rest ground."""
    s = np.asarray(s, dtype=complex)
    n_s_k = binom(partition.n_s, k)
    if s.shape != (n_s_k,):
        raise ValueError(f"expected {n_s_k} sender amplitudes, got shape {s.shape}")
    norm = np.linalg.norm(s)
    if abs(norm - 1.0) > 1e-10:
        warnings.warn(f"input norm {norm:.6g} != 1; renormalizing", stacklevel=2)
        s = s / norm
    cb = k_states(partition.n_sites, k)
    vec = np.zeros(len(cb), dtype=complex)
    for j, mask in enumerate(_pattern_masks(partition.sender_sites, partition.n_s, k)):
        vec[cb.index_of(mask)] = s[j]
    return PureState(amplitudes=vec,
                     basis=BasisDescriptor("sector", partition.n_sites, k))


def measure_ancilla(state: PureState, ancilla: str, outcome: int):
    """Post-select one ancilla outcome: (probability, renormalized state)."""
    if ancilla not in state.basis.ancillas:
        raise ValueError(f"unknown ancilla {ancilla!r}")
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    axis = 1 + state.basis.ancillas.index(ancilla)
    branch = np.take(state.amplitudes, outcome, axis=axis)
    prob = float(np.linalg.norm(branch) ** 2)
    rest = tuple(a for a in state.basis.ancillas if a != ancilla)
    new_basis = BasisDescriptor(state.basis.kind, state.basis.n, state.basis.k, rest)
    if prob == 0.0:
        return 0.0, None
    return prob, PureState(amplitudes=branch / math.sqrt(prob), basis=new_basis)


# ---------------------------------------------------------------------------
# operator applications
# ---------------------------------------------------------------------------

def _evolve_full(amps: np.ndarray, couplings: CouplingMatrix, tau: float,
                 eigs: dict[int, SectorEigensystem] | None = None) -> np.ndarray:
    """Apply the block-diagonal propagator to a computational-order full vector."""
    n = couplings.n_sites
    flat = amps.reshape(2 ** n, -1)
    out = flat.copy()
    for k in range(n + 1):
        idx = np.fromiter(k_states(n, k).states, dtype=np.int64)
        sub = flat[idx]
        if np.linalg.norm(sub) < 1e-15:
            continue
        eig = (eigs or {}).get(k) or sector_eigensystem(couplings, k)
        out[idx] = propagator(eig, tau) @ sub
    return out.reshape(amps.shape)


def _apply_wer_full_space(amps: np.ndarray, w_er: np.ndarray, n_sites: int,
                          n_er: int) -> np.ndarray:
    """Apply a 2**n_er unitary to the extended receiver (the top qubits)."""
    dim_er = 2 ** n_er
    rest = amps.size // (2 ** n_sites)
    mat = amps.reshape(dim_er, (2 ** (n_sites - n_er)) * rest)
    return (w_er @ mat).reshape(amps.shape)


def _apply_wer_sector(vec: np.ndarray, w_er: np.ndarray, partition: Partition,
                      k: int) -> np.ndarray:
    """Apply I (x) W_ER within the chain k-sector.

    Chain k-states split by their outside-ER occupation; each group carries an
    ER j-excitation register transformed by the corresponding block of W_ER.
    """
    n = partition.n_sites
    n_er = partition.n_er
    n_low = n - n_er
    cb = k_states(n, k)
    out = vec.copy()
    for j in range(k + 1):
        if j > n_er or k - j > n_low:
            continue
        er_j = np.fromiter(k_states(n_er, j).states, dtype=np.int64)
        block = w_er[np.ix_(er_j, er_j)]
        if np.abs(block - np.eye(len(er_j))).max() < 1e-15:
            continue
        for o in k_states(n_low, k - j).states:
            idx = np.fromiter((cb.index_of(o | (int(p) << n_low)) for p in er_j),
                              dtype=np.int64)
            out[idx] = block @ out[idx]
    return out


def _parity_flip_matches(masks, indices_or_n) -> np.ndarray:
    """Boolean array: odd number of control patterns fully excited per index.

    Equivalent to the product of one multi-controlled flip per pattern; inside
    a k-sector at most one k-qubit pattern can match, recovering plain
    projector semantics.
    """
    if isinstance(indices_or_n, int):
        idx = np.arange(2 ** indices_or_n, dtype=np.int64)
    else:
        idx = np.asarray(indices_or_n, dtype=np.int64)
    flips = np.zeros(idx.shape, dtype=bool)
    for m in masks:
        flips ^= (idx & m) == m
    return flips


def value_controlled_pattern_flips(n: int, value_sites, pattern_masks) -> np.ndarray:
    """Permutation of the cascade "if register == j, flip pattern_masks[j]".

    One controlled operator per register value, all commuting; with a pattern
    for every value the composite reduces to a single XOR per basis state.
    Returns ``perm`` with ``new[perm[m]] = old[m]``.
    """
    value_sites = tuple(value_sites)
    if len(pattern_masks) != 2 ** len(value_sites):
        raise ValueError("need one pattern per register value")
    idx = np.arange(2 ** n, dtype=np.int64)
    vals = np.zeros(2 ** n, dtype=np.int64)
    for b, q in enumerate(value_sites):
        vals |= ((idx >> (q - 1)) & 1) << b
    return idx ^ np.asarray(pattern_masks, dtype=np.int64)[vals]


def pattern_controlled_value_flips(n: int, pattern_masks, value_sites) -> np.ndarray:
    """Permutation of the cascade "if pattern j fully excited, XOR j into register".

    The per-pattern operators commute (diagonal controls, targets off the
    control sites); they are composed sequentially so states matching several
    patterns (possible off-sector) accumulate every XOR.
    """
    value_sites = tuple(value_sites)
    perm = np.arange(2 ** n, dtype=np.int64)
    for j, pat in enumerate(pattern_masks):
        matched = (perm & pat) == pat
        perm = np.where(matched, perm ^ _value_mask(j, value_sites), perm)
    return perm


def exact_value_controlled_pattern_flips(n: int, value_sites,
                                         pattern_masks) -> np.ndarray:
    """Permutation of the cascade "if register == j exactly, flip pattern j".

    Like :func:`value_controlled_pattern_flips` but defined for fewer
    patterns than register values (unmatched values pass through).
    """
    value_sites = tuple(value_sites)
    all_mask = _sites_mask(value_sites)
    perm = np.arange(2 ** n, dtype=np.int64)
    for j, pat in enumerate(pattern_masks):
        matched = (perm & all_mask) == _value_mask(j, value_sites)
        perm = np.where(matched, perm ^ pat, perm)
    return perm


def _apply_perm(amps: np.ndarray, perm: np.ndarray) -> np.ndarray:
    out = np.empty_like(amps)
    out[perm] = amps
    return out


def _swap_flag(amps: np.ndarray, matched: np.ndarray, axis: int) -> np.ndarray:
    """Flip the two values of one trailing qubit axis on matched chain rows."""
    out = amps.copy()
    moved = np.moveaxis(out, axis, 1)
    moved[matched] = moved[matched][:, ::-1]
    return out


# ---------------------------------------------------------------------------
# cost model and probability amplification
# ---------------------------------------------------------------------------

def amplification_runs(success_probability: float, epsilon: float) -> int:
    """Runs needed so that all-failure probability drops below epsilon."""
    p, eps = success_probability, epsilon
    if not 0.0 < p < 1.0:
        raise ValueError(f"success probability must be in (0, 1), got {p}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"target failure must be in (0, 1), got {eps}")
    return math.ceil(math.log2(1.0 / eps) / math.log2(1.0 / (1.0 - p)))


def cost_estimate(variant: str, *, n_s: int, k: int, n_er: int | None = None,
                  n_s0: int | None = None, q_layers: int | None = None,
                  t0: float = 0.0, lam_abs: float = 0.0) -> CostEstimate:
    """Symbolic operation counts per protocol variant, unit constants.

    The restoring-unitary depth is counted only for the circuit families
    (Q*n_er preserving, Q*n_er**2 non-preserving); general-form solutions
    contribute zero since no gate realization is prescribed for them.
    """
    n_s_k = binom(n_s, k)
    encode = 0
    wer = 0
    if variant == "k_excitation":
        label = k * n_s_k
        if q_layers and n_er:
            wer = q_layers * n_er
    elif variant == "arbitrary":
        if n_s0 is None:
            raise ValueError("arbitrary variant needs n_s0")
        encode = (2 ** n_s0) * k * n_s0
        label = k * (2 ** n_s0)
        if q_layers and n_er:
            wer = q_layers * n_er
    elif variant == "nonpreserving":
        if n_er is None:
            raise ValueError("nonpreserving variant needs n_er")
        label = n_er * n_s_k + k * binom(n_er, k)
        if q_layers:
            wer = q_layers * n_er ** 2
    elif variant == "global":
        label = 1
    else:
        raise ValueError(f"unknown variant {variant!r}")
    runs = math.ceil(1.0 / lam_abs ** 2) if lam_abs > 0 else None
    return CostEstimate(encode_depth=encode, label_depth=label, wer_depth=wer,
                        t0=t0, runs_expected=runs)


# ---------------------------------------------------------------------------
# protocol runners
# ---------------------------------------------------------------------------

def _q_layers_of(solution: RestoreSolution) -> int | None:
    if solution.circuit_params is None:
        return None
    per = 2 if solution.mode == "circuit-preserving" else 3
    return len(solution.circuit_params) // (per * solution.n_er)


def _check_solution(solution: RestoreSolution, tau0: float, k: int,
                    partition: Partition, preserving: bool) -> None:
    if not solution.converged:
        raise ValueError("restoring solution did not converge")
    if abs(solution.tau - tau0) > 1e-9:
        raise ValueError(f"solution was computed at tau={solution.tau}, "
                         f"protocol runs at tau={tau0}")
    if solution.k != k or solution.n_er != partition.n_er:
        raise ValueError("solution provenance does not match the partition")
    is_pres = solution.mode in ("preserving-general", "circuit-preserving")
    if preserving != is_pres:
        want = "preserving" if preserving else "non-preserving"
        raise ValueError(f"protocol needs a {want} solution, got {solution.mode}")


def run_k_excitation_pst(couplings: CouplingMatrix, partition: Partition, k: int,
                         s, solution: RestoreSolution, tau0: float,
                         eig: SectorEigensystem | None = None) -> ProtocolReport:
    """Fixed-excitation protocol in the chain k-sector with flag ancilla B.

    Pipeline: sector evolution to tau0, local W_ER on the extended receiver,
    flag flip on the receiver k-patterns, post-selection of the flagged
    branch.  Output amplitudes are reported in receiver k-basis order.
    """
    _check_solution(solution, tau0, k, partition, preserving=True)
    s_norm = np.asarray(s, dtype=complex)
    s_norm = s_norm / np.linalg.norm(s_norm)
    state = prepare_k_state(s_norm, partition, k)

    eig = eig or sector_eigensystem(couplings, k)
    vec = propagator(eig, tau0) @ state.amplitudes
    w_er = wer_full_from_solution(solution)
    vec = _apply_wer_sector(vec, w_er, partition, k)

    cb = k_states(partition.n_sites, k)
    recv_masks = _pattern_masks(partition.receiver_sites, partition.n_r, k)
    recv_idx = np.fromiter((cb.index_of(m) for m in recv_masks), dtype=np.int64)
    amps = np.zeros((len(cb), 2), dtype=complex)
    amps[:, 0] = vec
    flips = _parity_flip_matches(recv_masks, np.fromiter(cb.states, dtype=np.int64))
    amps = _swap_flag(amps, flips, axis=1)

    st = PureState(amps, BasisDescriptor("sector", partition.n_sites, k, ("B",)))
    prob, post = measure_ancilla(st, "B", 1)
    out = post.amplitudes[recv_idx] if post is not None else np.zeros(len(recv_idx),
                                                                      dtype=complex)
    fid = float(abs(np.vdot(s_norm, out)))
    cost = cost_estimate("k_excitation", n_s=partition.n_s, k=k,
                         n_er=partition.n_er, t0=tau0,
                         q_layers=_q_layers_of(solution),
                         lam_abs=abs(solution.lam))
    return ProtocolReport(variant="k_excitation", success_probability=prob,
                          fidelity=fid, output_amplitudes=out,
                          lambda_expected=solution.lam,
                          garbage_norm=math.sqrt(max(1.0 - prob, 0.0)), cost=cost)


def run_global_pst(couplings: CouplingMatrix, partition: Partition, sender_state,
                   w, tau0: float) -> ProtocolReport:
    """Whole-line reference protocol: flag flips on the S+TL ground subspace.

    ``sender_state`` is a full 2**n_s vector over the sender register; it must
    be supported on a single excitation sector (multi-sector inputs would need
    equal scale factors across sectors, which no solver here constructs).
    ``w`` is either a full-chain unitary or a preserving RestoreSolution whose
    W_ER is embedded as identity outside the extended receiver.
    """
    n = partition.n_sites
    if n > 12:
        raise ValueError("full-space reference protocol guarded to n_sites <= 12")
    s_full = np.asarray(sender_state, dtype=complex)
    if s_full.shape != (2 ** partition.n_s,):
        raise ValueError(f"sender state must have 2**n_s = {2 ** partition.n_s} "
                         "amplitudes")
    ks = {bin(j).count("1") for j in range(s_full.size) if abs(s_full[j]) > 1e-12}
    if len(ks) != 1:
        raise ValueError("sender state mixes excitation sectors; the whole-line "
                         "protocol is only defined here for fixed-k inputs")
    k = ks.pop()
    s_full = s_full / np.linalg.norm(s_full)

    amps = np.zeros((2 ** n, 2), dtype=complex)
    for j in range(s_full.size):
        if abs(s_full[j]) > 0:
            amps[_value_mask(j, partition.sender_sites), 0] = s_full[j]
    amps = _evolve_full(amps, couplings, tau0)

    lam = 1.0 + 0.0j
    if isinstance(w, RestoreSolution):
        _check_solution(w, tau0, k, partition, preserving=True)
        lam = w.lam
        amps = _apply_wer_full_space(amps, wer_full_from_solution(w), n,
                                     partition.n_er)
    else:
        w = np.asarray(w, dtype=complex)
        if w.shape != (2 ** n, 2 ** n):
            raise ValueError("whole-line unitary has wrong shape")
        amps = (w @ amps.reshape(2 ** n, -1)).reshape(amps.shape)

    stl_mask = _sites_mask(range(1, n - partition.n_r + 1))
    idx = np.arange(2 ** n, dtype=np.int64)
    matched = (idx & stl_mask) == 0
    amps = _swap_flag(amps, matched, axis=1)

    st = PureState(amps, BasisDescriptor("full", n, None, ("B",)))
    prob, post = measure_ancilla(st, "B", 1)
    recv_masks = _pattern_masks(partition.receiver_sites, partition.n_r, k)
    out = (post.amplitudes[np.fromiter(recv_masks, dtype=np.int64)]
           if post is not None else np.zeros(len(recv_masks), dtype=complex))
    s_sector = np.zeros(binom(partition.n_s, k), dtype=complex)
    for i, m in enumerate(k_states(partition.n_s, k).states):
        s_sector[i] = s_full[m]
    fid = float(abs(np.vdot(s_sector, out)))
    cost = cost_estimate("global", n_s=partition.n_s, k=k, t0=tau0,
                         lam_abs=abs(lam))
    return ProtocolReport(variant="global", success_probability=prob,
                          fidelity=fid, output_amplitudes=out,
                          lambda_expected=complex(lam),
                          garbage_norm=math.sqrt(max(1.0 - prob, 0.0)), cost=cost)


def run_arbitrary_pst(couplings: CouplingMatrix, partition: Partition, k: int,
                      input_state, solution: RestoreSolution,
                      tau0: float) -> ProtocolReport:
    """Encoded protocol: arbitrary S0 state through the k-excitation channel.

    Five stages: encode S0 into sender k-patterns (and reset S0), evolve,
    restore at the extended receiver, flag the receiver patterns, decode into
    R0 (and reset R), then post-select the flag.  Runs over the full
    computational space with the flag ancilla.
    """
    n = partition.n_sites
    if n + 1 > FULL_GUARD:
        raise ValueError(f"full-space protocol guarded to n_sites + 1 <= {FULL_GUARD}")
    if not partition.s0_sites or not partition.r0_sites:
        raise ValueError("partition must define S0 and R0 for the encoded protocol")
    _check_solution(solution, tau0, k, partition, preserving=True)
    s0 = partition.s0_sites
    r0 = partition.r0_sites
    if len(r0) != len(s0):
        raise ValueError("S0 and R0 must have equal size")
    n_s0 = len(s0)
    if 2 ** n_s0 > binom(partition.n_s, k):
        raise ValueError(f"2**{n_s0} input states exceed the {binom(partition.n_s, k)} "
                         f"available sender k-patterns")
    psi0 = np.asarray(input_state, dtype=complex)
    if psi0.shape != (2 ** n_s0,):
        raise ValueError(f"input state must have 2**{n_s0} amplitudes")
    psi0 = psi0 / np.linalg.norm(psi0)

    idx = np.arange(2 ** n, dtype=np.int64)
    s_masks = _pattern_masks(partition.sender_sites, partition.n_s, k)[: 2 ** n_s0]
    r_masks = _pattern_masks(partition.receiver_sites, partition.n_r, k)[: 2 ** n_s0]
    r0_vals = np.fromiter((_value_mask(j, r0) for j in range(2 ** n_s0)),
                          dtype=np.int64)

    amps = np.zeros((2 ** n, 2), dtype=complex)
    for j in range(2 ** n_s0):
        amps[_value_mask(j, s0), 0] = psi0[j]

    # encode S0 value j into sender pattern chi_j, then ground S0
    amps = _apply_perm(amps, value_controlled_pattern_flips(n, s0, s_masks))
    amps = _apply_perm(amps, pattern_controlled_value_flips(n, s_masks, s0))

    amps = _evolve_full(amps, couplings, tau0)
    amps = _apply_wer_full_space(amps, wer_full_from_solution(solution), n,
                                 partition.n_er)

    flips = _parity_flip_matches(r_masks, idx)
    amps = _swap_flag(amps, flips, axis=1)

    # decode receiver pattern chi_j into R0 value j, then ground the receiver
    amps = _apply_perm(amps, pattern_controlled_value_flips(n, r_masks, r0))
    amps = _apply_perm(amps, exact_value_controlled_pattern_flips(n, r0, r_masks))

    st = PureState(amps, BasisDescriptor("full", n, None, ("B",)))
    prob, post = measure_ancilla(st, "B", 1)
    out_amp = (post.amplitudes[r0_vals] if post is not None
               else np.zeros(2 ** n_s0, dtype=complex))
    fid = float(abs(np.vdot(psi0, out_amp)))
    cost = cost_estimate("arbitrary", n_s=partition.n_s, k=k, n_er=partition.n_er,
                         n_s0=n_s0, t0=tau0, lam_abs=abs(solution.lam))
    return ProtocolReport(variant="arbitrary", success_probability=prob,
                          fidelity=fid, output_amplitudes=out_amp,
                          lambda_expected=solution.lam,
                          garbage_norm=math.sqrt(max(1.0 - prob, 0.0)), cost=cost)


def run_nonpreserving_pst(couplings: CouplingMatrix, partition: Partition, k: int,
                          s, solution: RestoreSolution,
                          tau0: float) -> ProtocolReport:
    """Protocol variant for a W_ER that mixes excitation sectors.

    A marker ancilla D joins at registration time and is flipped on the
    "all excitations inside ER" components before W_ER acts; the flag B then
    selects components with A ground, a receiver k-pattern, and D excited.
    """
    n = partition.n_sites
    if n + 2 > FULL_GUARD:
        raise ValueError(f"this variant is guarded to n_sites + 2 <= {FULL_GUARD}")
    _check_solution(solution, tau0, k, partition, preserving=False)
    s = np.asarray(s, dtype=complex)
    s = s / np.linalg.norm(s)
    n_s_k = binom(partition.n_s, k)
    if s.shape != (n_s_k,):
        raise ValueError(f"expected {n_s_k} sender amplitudes")

    idx = np.arange(2 ** n, dtype=np.int64)
    s_masks = _pattern_masks(partition.sender_sites, partition.n_s, k)
    r_masks = _pattern_masks(partition.receiver_sites, partition.n_r, k)
    er_masks = _pattern_masks(partition.er_sites, partition.n_er, k)
    a_all = _sites_mask(partition.a_sites)
    r_all = _sites_mask(partition.receiver_sites)

    amps = np.zeros((2 ** n, 2, 2), dtype=complex)   # chain x D x B
    for j in range(n_s_k):
        amps[s_masks[j], 0, 0] = s[j]
    amps = _evolve_full(amps, couplings, tau0)

    flips = _parity_flip_matches(er_masks, idx)      # all k excitations in ER
    amps = _swap_flag(amps, flips, axis=1)

    amps = _apply_wer_full_space(amps, wer_full_from_solution(solution), n,
                                 partition.n_er)

    matched = (idx & a_all) == 0
    pattern_hit = np.zeros(2 ** n, dtype=bool)
    for j in range(n_s_k):
        pattern_hit |= (idx & r_all) == r_masks[j]
    matched &= pattern_hit
    d_is_1 = np.zeros((2 ** n, 2), dtype=bool)
    d_is_1[matched, 1] = True
    flat = amps.reshape(2 ** n * 2, 2)
    sel = d_is_1.reshape(-1)
    flat[sel] = flat[sel][:, ::-1]
    amps = flat.reshape(2 ** n, 2, 2)

    st = PureState(amps, BasisDescriptor("full", n, None, ("D", "B")))
    prob, post = measure_ancilla(st, "B", 1)
    if post is not None:
        out = np.array([post.amplitudes[r_masks[j], 1] for j in range(n_s_k)])
    else:
        out = np.zeros(n_s_k, dtype=complex)
    fid = float(abs(np.vdot(s, out)))
    cost = cost_estimate("nonpreserving", n_s=partition.n_s, k=k,
                         n_er=partition.n_er, t0=tau0,
                         q_layers=_q_layers_of(solution),
                         lam_abs=abs(solution.lam))
    return ProtocolReport(variant="nonpreserving", success_probability=prob,
                          fidelity=fid, output_amplitudes=out,
                          lambda_expected=solution.lam,
                          garbage_norm=math.sqrt(max(1.0 - prob, 0.0)), cost=cost)
