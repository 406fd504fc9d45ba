"""Fermionic Fock-space kernel on an occupation-bitmask basis.

A system of ``N`` sites carries ``2N`` spin-orbitals (modes), flattened as
``m = 2*site + spin`` with spin ``0 = up``, ``1 = down``.  A many-body basis
state is an integer bitmask over modes (bit ``m`` set means mode ``m``
occupied); a state vector is a dense complex array of length ``4**N``
indexed by mask, and mask 0 is the vacuum.

The canonical basis state of a mask is the word of creation operators
applied in ascending mode order to the vacuum.  Creating into mode ``m``
therefore carries the sign ``(-1)**(number of occupied modes below m)``,
which is exactly the exterior-algebra rule for prepending a single-particle
state to a wedge word and commuting it into place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

UP = 0
DOWN = 1

#: Hard guard on system size: amplitudes are dense over 4**N masks.
MAX_SITES = 10

_NORM_TOL = 1e-12


def n_modes(n_sites: int) -> int:
    return 2 * n_sites


def space_dim(n_sites: int) -> int:
    """Dimension of the Fock space: 4**N occupation masks."""
    return 1 << (2 * n_sites)


def mode_index(site: int, spin: int, n_sites: int | None = None) -> int:
    """Flatten (site, spin) to the mode number ``2*site + spin``."""
    if spin not in (UP, DOWN):
        raise ValueError(f"spin must be UP (0) or DOWN (1), got {spin!r}")
    if site < 0 or (n_sites is not None and site >= n_sites):
        raise ValueError(f"site {site} out of range for {n_sites} sites")
    return 2 * site + spin


@dataclass
class FockVector:
    """Dense state vector over the occupation-mask basis of ``n_sites`` sites."""

    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must be in [1, {MAX_SITES}], got {self.n_sites}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (space_dim(self.n_sites),):
            raise ValueError(
                f"amplitudes must have length {space_dim(self.n_sites)}, got shape {amps.shape}"
            )
        self.amplitudes = amps

    @classmethod
    def vacuum(cls, n_sites: int) -> "FockVector":
        amps = np.zeros(space_dim(n_sites), dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_sites, amps)

    @classmethod
    def basis_state(cls, n_sites: int, mask: int) -> "FockVector":
        amps = np.zeros(space_dim(n_sites), dtype=np.complex128)
        amps[mask] = 1.0
        return cls(n_sites, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.n_sites, self.amplitudes / n)

    def copy(self) -> "FockVector":
        return FockVector(self.n_sites, self.amplitudes.copy())

    def overlap(self, other: "FockVector") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def _sign_below(masks: np.ndarray, m: int) -> np.ndarray:
    """(-1)**(number of occupied modes with index < m), per mask."""
    below = masks & ((1 << m) - 1)
    return 1 - 2 * (np.bitwise_count(below).astype(np.int64) & 1)


def apply_creation(state: FockVector, m: int) -> FockVector:
    """Apply the creation operator of mode ``m``.

    Components with mode ``m`` already occupied map to zero; the rest move
    to the mask with bit ``m`` set, times the ascending-order sign.
    """
    nm = n_modes(state.n_sites)
    if not 0 <= m < nm:
        raise ValueError(f"mode {m} out of range for {nm} modes")
    amps = state.amplitudes
    masks = np.arange(amps.size)
    src = masks[(masks >> m) & 1 == 0]
    out = np.zeros_like(amps)
    out[src | (1 << m)] = _sign_below(src, m) * amps[src]
    return FockVector(state.n_sites, out)


def apply_annihilation(state: FockVector, m: int) -> FockVector:
    """Apply the annihilation operator of mode ``m`` (adjoint of creation)."""
    nm = n_modes(state.n_sites)
    if not 0 <= m < nm:
        raise ValueError(f"mode {m} out of range for {nm} modes")
    amps = state.amplitudes
    masks = np.arange(amps.size)
    src = masks[(masks >> m) & 1 == 1]
    out = np.zeros_like(amps)
    out[src & ~(1 << m)] = _sign_below(src, m) * amps[src]
    return FockVector(state.n_sites, out)


def creation_matrix(m: int, n_sites: int) -> sparse.csr_matrix:
    """Sparse matrix of the mode-``m`` creation operator on ``4**n_sites`` masks."""
    dim = space_dim(n_sites)
    if not 0 <= m < n_modes(n_sites):
        raise ValueError(f"mode {m} out of range for {n_modes(n_sites)} modes")
    masks = np.arange(dim)
    src = masks[(masks >> m) & 1 == 0]
    data = _sign_below(src, m).astype(np.float64)
    return sparse.csr_matrix((data, (src | (1 << m), src)), shape=(dim, dim))


def annihilation_matrix(m: int, n_sites: int) -> sparse.csr_matrix:
    # real entries, so the adjoint is the plain transpose
    return creation_matrix(m, n_sites).T.tocsr()


def number_matrix(m: int, n_sites: int) -> sparse.csr_matrix:
    dim = space_dim(n_sites)
    occ = (np.arange(dim) >> m) & 1
    return sparse.diags(occ.astype(np.float64)).tocsr()


@lru_cache(maxsize=None)
def site_occupation_table(n_sites: int) -> np.ndarray:
    """(4**N, N) array: occupation count (0, 1 or 2) of each site per mask."""
    masks = np.arange(space_dim(n_sites))
    table = np.empty((masks.size, n_sites), dtype=np.uint8)
    for i in range(n_sites):
        table[:, i] = ((masks >> (2 * i)) & 1) + ((masks >> (2 * i + 1)) & 1)
    return table


@lru_cache(maxsize=None)
def spin_count_table(n_sites: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-mask counts of occupied up modes and down modes."""
    masks = np.arange(space_dim(n_sites))
    up_bits = sum(((masks >> (2 * i)) & 1) for i in range(n_sites))
    down_bits = sum(((masks >> (2 * i + 1)) & 1) for i in range(n_sites))
    return up_bits.astype(np.uint8), down_bits.astype(np.uint8)


def occupied_sites(state: FockVector, tol: float = 0.0) -> frozenset[int]:
    """Sites touched by any occupied mode of any nonzero component."""
    nz = np.flatnonzero(np.abs(state.amplitudes) > tol)
    combined = 0
    for mask in nz:
        combined |= int(mask)
    sites = set()
    m = 0
    while combined:
        if combined & 1:
            sites.add(m // 2)
        combined >>= 1
        m += 1
    return frozenset(sites)


def _merge_parity(ma: int, mb: int) -> int:
    """Parity of inversions when sorting the word (ma ascending)(mb ascending)."""
    p = 0
    mm = mb
    while mm:
        beta = (mm & -mm).bit_length() - 1
        p ^= (ma >> (beta + 1)).bit_count() & 1
        mm &= mm - 1
    return p


def wedge_product(
    a: FockVector,
    b: FockVector,
    sites_a: frozenset[int] | None = None,
    sites_b: frozenset[int] | None = None,
) -> FockVector:
    """Exterior product of two states supported on disjoint site sets.

    Equivalent to applying a's creation word and then b's to the vacuum,
    with signs fixed by the canonical ascending mode order.  Site supports
    are inferred from the occupied modes when not given explicitly.
    """
    if a.n_sites != b.n_sites:
        raise ValueError("wedge factors must live on the same number of sites")
    sa = occupied_sites(a) if sites_a is None else frozenset(sites_a)
    sb = occupied_sites(b) if sites_b is None else frozenset(sites_b)
    if sa & sb:
        raise ValueError(f"overlapping supports: {sorted(sa & sb)}")
    out = np.zeros_like(a.amplitudes)
    nz_a = np.flatnonzero(a.amplitudes)
    nz_b = np.flatnonzero(b.amplitudes)
    for ma in nz_a:
        ma = int(ma)
        va = a.amplitudes[ma]
        for mb in nz_b:
            mb = int(mb)
            if ma & mb:
                continue
            sign = -1.0 if _merge_parity(ma, mb) else 1.0
            out[ma | mb] += sign * va * b.amplitudes[mb]
    return FockVector(a.n_sites, out)


_SQRT_HALF = 1.0 / np.sqrt(2.0)


def prepare_site_psi(site: int, n_sites: int, variant: str = "plain") -> FockVector:
    """(|vac> + |up,down>_site)/sqrt(2); the tilde variant carries i on the pair."""
    if not 0 <= site < n_sites:
        raise ValueError(f"site {site} out of range for {n_sites} sites")
    pair_mask = (1 << (2 * site)) | (1 << (2 * site + 1))
    amps = np.zeros(space_dim(n_sites), dtype=np.complex128)
    amps[0] = _SQRT_HALF
    amps[pair_mask] = (1j if variant == "tilde" else 1.0) * _SQRT_HALF
    if variant not in ("plain", "tilde"):
        raise ValueError(f"unknown variant {variant!r}")
    return FockVector(n_sites, amps)


def prepare_pair_phi(edge: tuple[int, int], n_sites: int, variant: str = "plain") -> FockVector:
    """Superposition of the two single-particle hopping eigenstates of an edge.

    The plain variant collapses to a single up fermion on the first
    endpoint; the tilde variant is ((1+i)/2)|up>_k1 + ((1-i)/2)|up>_k2.
    """
    k1, k2 = edge
    if k1 == k2:
        raise ValueError("edge endpoints must differ")
    for k in (k1, k2):
        if not 0 <= k < n_sites:
            raise ValueError(f"site {k} out of range for {n_sites} sites")
    amps = np.zeros(space_dim(n_sites), dtype=np.complex128)
    if variant == "plain":
        amps[1 << (2 * k1)] = 1.0
    elif variant == "tilde":
        amps[1 << (2 * k1)] = (1.0 + 1.0j) / 2.0
        amps[1 << (2 * k2)] = (1.0 - 1.0j) / 2.0
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return FockVector(n_sites, amps)


@dataclass
class ProjectorSpec:
    """Rank-one projector onto ``target`` on the listed modes, identity elsewhere.

    ``support`` holds strictly ascending mode indices; ``target`` is the
    normalized local state over the 2**k masks of those modes, in the same
    canonical ascending-mode wedge basis as the full space.
    """

    support: tuple[int, ...]
    target: np.ndarray

    def __post_init__(self):
        self.support = tuple(int(m) for m in self.support)
        if len(set(self.support)) != len(self.support):
            raise ValueError("support modes must be distinct")
        if any(self.support[i] >= self.support[i + 1] for i in range(len(self.support) - 1)):
            raise ValueError("support modes must be ascending")
        target = np.asarray(self.target, dtype=np.complex128)
        if target.shape != (1 << len(self.support),):
            raise ValueError(
                f"target must have length {1 << len(self.support)}, got shape {target.shape}"
            )
        if abs(np.linalg.norm(target) - 1.0) > _NORM_TOL:
            raise ValueError("projector target must be normalized")
        self.target = target


def projector_from_state(state: FockVector, support: tuple[int, ...]) -> ProjectorSpec:
    """Compress a full-space pure state (complement in vacuum) to a ProjectorSpec."""
    support = tuple(sorted(int(m) for m in support))
    smask = 0
    for m in support:
        smask |= 1 << m
    nz = np.flatnonzero(state.amplitudes)
    if any(int(mask) & ~smask for mask in nz):
        raise ValueError("state has occupation outside the declared support")
    k = len(support)
    local = np.zeros(1 << k, dtype=np.complex128)
    for l in range(1 << k):
        full = 0
        for j in range(k):
            if (l >> j) & 1:
                full |= 1 << support[j]
        local[l] = state.amplitudes[full]
    return ProjectorSpec(support, local)


def site_modes(site: int) -> tuple[int, int]:
    return (2 * site, 2 * site + 1)


def site_psi_projector(site: int, variant: str = "plain") -> ProjectorSpec:
    """Projector onto the single-site superposition state, on that site's two modes."""
    local = prepare_site_psi(0, 1, variant)
    support = site_modes(site)
    return ProjectorSpec(support, local.amplitudes)


def pair_phi_projector(edge: tuple[int, int], variant: str = "plain") -> ProjectorSpec:
    """Projector onto the edge state, supported on all four modes of the two sites."""
    k1, k2 = edge
    lo, hi = min(k1, k2), max(k1, k2)
    # build on a minimal two-site space with the edge roles preserved
    role = (0, 1) if k1 < k2 else (1, 0)
    local = prepare_pair_phi(role, 2, variant)
    support = site_modes(lo) + site_modes(hi)
    return ProjectorSpec(support, local.amplitudes)


@lru_cache(maxsize=None)
def _support_tables(total_modes: int, support: tuple[int, ...]):
    """Index maps splitting each mask into (support part, complement part).

    Returns ``(a_idx, b_idx, sign)`` with the decomposition
    ``|mask> = sign * |support word> wedge |complement word>`` in canonical
    ascending order; ``sign`` is the inversion parity between the parts.
    """
    dim = 1 << total_modes
    masks = np.arange(dim)
    comp = tuple(m for m in range(total_modes) if m not in support)
    smask = 0
    for m in support:
        smask |= 1 << m
    a_idx = np.zeros(dim, dtype=np.int64)
    for j, m in enumerate(support):
        a_idx |= ((masks >> m) & 1) << j
    b_idx = np.zeros(dim, dtype=np.int64)
    for j, m in enumerate(comp):
        b_idx |= ((masks >> m) & 1) << j
    a_part = masks & smask
    inv = np.zeros(dim, dtype=np.int64)
    for c in comp:
        inv += ((masks >> c) & 1) * np.bitwise_count(a_part >> (c + 1)).astype(np.int64)
    sign = (1 - 2 * (inv & 1)).astype(np.float64)
    return a_idx, b_idx, sign


def _split(state_amps: np.ndarray, total_modes: int, support: tuple[int, ...]) -> np.ndarray:
    a_idx, b_idx, sign = _support_tables(total_modes, support)
    k = len(support)
    T = np.zeros((1 << k, 1 << (total_modes - k)), dtype=np.complex128)
    T[a_idx, b_idx] = sign * state_amps
    return T


def _unsplit(T: np.ndarray, total_modes: int, support: tuple[int, ...]) -> np.ndarray:
    a_idx, b_idx, sign = _support_tables(total_modes, support)
    return sign * T[a_idx, b_idx]


def projector_expectation(state: FockVector, proj: ProjectorSpec) -> float:
    """<state| P |state> for the embedded projector; clipped into [0, 1]."""
    nm = n_modes(state.n_sites)
    if proj.support and proj.support[-1] >= nm:
        raise ValueError("projector support outside the state's mode range")
    T = _split(state.amplitudes, nm, proj.support)
    v = proj.target.conj() @ T
    p = float(np.real(np.vdot(v, v)))
    if p < -_NORM_TOL or p > 1.0 + 1e-9:
        raise ValueError(f"projector expectation {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def _check_disjoint_supports(projectors) -> None:
    seen: set[int] = set()
    for proj in projectors:
        ps = set(proj.support)
        if ps & seen:
            raise ValueError("projector supports must be pairwise disjoint")
        seen |= ps


def projective_measure(
    state: FockVector,
    projectors: list[ProjectorSpec],
    rng: np.random.Generator,
    mode: str = "faithful",
) -> tuple[np.ndarray, FockVector]:
    """Measure commuting projectors, returning one outcome bit per projector.

    ``faithful`` samples each outcome with its conditional probability and
    collapses sequentially; ``fast-marginal`` draws every bit independently
    from its pre-measurement marginal and leaves the state untouched (valid
    whenever only per-projector marginals are consumed downstream).
    """
    _check_disjoint_supports(projectors)
    nm = n_modes(state.n_sites)
    if mode == "fast-marginal":
        outcomes = np.array(
            [rng.random() < projector_expectation(state, p) for p in projectors],
            dtype=np.int8,
        )
        return outcomes, state.copy()
    if mode != "faithful":
        raise ValueError(f"unknown measurement mode {mode!r}")
    amps = state.amplitudes.copy()
    outcomes = np.zeros(len(projectors), dtype=np.int8)
    for i, proj in enumerate(projectors):
        T = _split(amps, nm, proj.support)
        v = proj.target.conj() @ T
        p1 = min(max(float(np.real(np.vdot(v, v))), 0.0), 1.0)
        hit = rng.random() < p1
        outcomes[i] = 1 if hit else 0
        if hit:
            T = np.outer(proj.target, v)
        else:
            T -= np.outer(proj.target, v)
        amps = _unsplit(T, nm, proj.support)
        norm = np.linalg.norm(amps)
        if norm == 0.0:
            raise ValueError("measurement collapsed onto the zero vector")
        amps /= norm
    return outcomes, FockVector(state.n_sites, amps)
