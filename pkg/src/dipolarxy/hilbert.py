"""Operators and Hamiltonians for 2-level and 5-level atom registers.

Unit convention: every user-facing frequency (couplings, light shifts, Rabi
frequencies) is an ordinary frequency nu in MHz.  Hamiltonian matrices are
generators in angular units, omega = 2*pi*nu, in rad/us, so that
U = exp(-i H t) with t in us.  Builders document which side of the
conversion they sit on.

Level order: qubit (up, down); five-level (up, down, g, p6, r) where g is
the electronic ground state, p6 the short-lived intermediate state and r
the reservoir of other high-lying states.  The spin states up/down are
indices 0/1 in both models, and up is the +1 eigenstate of sigma_z.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import AddressingPattern, pairwise_distances

TWO_PI = 2.0 * np.pi

UP, DOWN, GROUND, P6, RESERVOIR = 0, 1, 2, 3, 4

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


class AtomModel(Enum):
    QUBIT = 2
    FIVE_LEVEL = 5

    @property
    def dim(self) -> int:
        return self.value


def single_atom_op(model: AtomModel, qubit_op: np.ndarray) -> np.ndarray:
    """Embed a 2x2 qubit operator into one atom's full level space.

    For the five-level model the operator acts on the (up, down) subspace
    and annihilates g, p6 and r.
    """
    d = model.dim
    out = np.zeros((d, d), dtype=complex)
    out[:2, :2] = qubit_op
    return out


def level_projector(model: AtomModel, level: int) -> np.ndarray:
    out = np.zeros((model.dim, model.dim), dtype=complex)
    out[level, level] = 1.0
    return out


def transition_op(model: AtomModel, to_level: int, from_level: int) -> np.ndarray:
    """|to><from| on a single atom (jump operators are built from these)."""
    out = np.zeros((model.dim, model.dim), dtype=complex)
    out[to_level, from_level] = 1.0
    return out


def embed(op: np.ndarray, site: int, n_atoms: int, model: AtomModel) -> np.ndarray:
    """Tensor a single-atom operator into the N-atom space at `site`."""
    d = model.dim
    out = np.eye(1, dtype=complex)
    for i in range(n_atoms):
        out = np.kron(out, op if i == site else np.eye(d, dtype=complex))
    return out


_PAULI_BY_SYMBOL = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z, "1": IDENTITY_2}


def pauli_string(axes, model: AtomModel, n_atoms: int | None = None) -> np.ndarray:
    """Tensor product of Pauli operators, identity on atoms marked '1'.

    `axes` is a per-atom sequence of symbols in {x, y, z, 1}.  On the
    five-level model each Pauli acts on the (up, down) subspace only; '1'
    is the identity on the full level space.
    """
    axes = list(axes)
    if n_atoms is None:
        n_atoms = len(axes)
    if len(axes) != n_atoms:
        raise ValueError("one axis symbol per atom required")
    out = np.eye(1, dtype=complex)
    full_identity = np.eye(model.dim, dtype=complex)
    for sym in axes:
        if sym not in _PAULI_BY_SYMBOL:
            raise ValueError(f"unknown Pauli axis {sym!r}")
        if sym == "1":
            op = full_identity
        else:
            op = single_atom_op(model, _PAULI_BY_SYMBOL[sym])
        out = np.kron(out, op)
    return out


@dataclass(frozen=True)
class CouplingConstants:
    """Interaction strengths referenced to the lattice constant.

    j_mhz: XY coupling J at distance a (ordinary frequency, may be negative).
    c6_upup_mhz / c6_downdown_mhz: van der Waals energies C6/a^6 at
    distance a (ordinary frequency).
    """

    j_mhz: float = -0.82
    lattice_constant: float = 12.3
    c6_upup_mhz: float = 0.040
    c6_downdown_mhz: float = 0.006

    def __post_init__(self):
        for v in (self.j_mhz, self.lattice_constant,
                  self.c6_upup_mhz, self.c6_downdown_mhz):
            if not np.isfinite(v):
                raise ValueError("coupling constants must be finite")


@dataclass(frozen=True)
class HamiltonianTerm:
    """Dense Hermitian generator over the N-atom space, in rad/us."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if np.max(np.abs(m - m.conj().T)) > 1e-9 * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"non-Hermitian Hamiltonian term {self.label!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def xy_hamiltonian(positions: np.ndarray, constants: CouplingConstants,
                   model: AtomModel = AtomModel.QUBIT) -> HamiltonianTerm:
    """Dipolar flip-flop Hamiltonian (J/2) sum a^3/r^3 (sxsx + sysy).

    Input J in MHz; output matrix in rad/us.  The flip-flop matrix element
    between |..up_i down_j..> and |..down_i up_j..> is J a^3/r_ij^3 as an
    ordinary frequency.
    """
    positions = np.atleast_2d(positions)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least two atoms")
    r = pairwise_distances(positions)
    dim = model.dim ** n
    h = np.zeros((dim, dim), dtype=complex)
    a3 = constants.lattice_constant ** 3
    sx = [embed(single_atom_op(model, SIGMA_X), i, n, model) for i in range(n)]
    sy = [embed(single_atom_op(model, SIGMA_Y), i, n, model) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if r[i, j] <= 0:
                raise ValueError("coincident atoms")
            coupling = TWO_PI * constants.j_mhz * a3 / r[i, j] ** 3
            h += 0.5 * coupling * (sx[i] @ sx[j] + sy[i] @ sy[j])
    return HamiltonianTerm(h, "xy")


def lightshift_hamiltonian(pattern: AddressingPattern, delta_mhz: float,
                           model: AtomModel = AtomModel.QUBIT,
                           multipliers: np.ndarray | None = None) -> HamiltonianTerm:
    """Per-atom light-shift term delta_i (1 + sigma_z)/2, shifting only |up>.

    delta_i = class multiplier * delta (ordinary MHz in, rad/us out).
    `multipliers` overrides the integer class multipliers, e.g. to model
    calibration inhomogeneity.
    """
    if delta_mhz < 0:
        raise ValueError("light shift must be >= 0")
    n = pattern.n_atoms
    mult = pattern.multipliers() if multipliers is None else np.asarray(multipliers, float)
    dim = model.dim ** n
    h = np.zeros((dim, dim), dtype=complex)
    p_up = level_projector(model, UP)
    for i in range(n):
        if mult[i] != 0.0:
            h += TWO_PI * delta_mhz * mult[i] * embed(p_up, i, n, model)
    return HamiltonianTerm(h, "lightshift")


def vdw_hamiltonian(positions: np.ndarray, constants: CouplingConstants,
                    model: AtomModel = AtomModel.QUBIT) -> HamiltonianTerm:
    """Pairwise van der Waals term: C6 a^6/r^6 on up-up and down-down pairs."""
    positions = np.atleast_2d(positions)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least two atoms")
    r = pairwise_distances(positions)
    dim = model.dim ** n
    h = np.zeros((dim, dim), dtype=complex)
    a6 = constants.lattice_constant ** 6
    pu = [embed(level_projector(model, UP), i, n, model) for i in range(n)]
    pd = [embed(level_projector(model, DOWN), i, n, model) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if r[i, j] <= 0:
                raise ValueError("coincident atoms")
            scale = TWO_PI * a6 / r[i, j] ** 6
            h += scale * (constants.c6_upup_mhz * pu[i] @ pu[j]
                          + constants.c6_downdown_mhz * pd[i] @ pd[j])
    return HamiltonianTerm(h, "vdw")


def exact_spectrum(term: HamiltonianTerm, k: int | None = None):
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian term.

    Returns (values, vectors) with vectors in columns.  `k` truncates to
    the k lowest levels.
    """
    h = term.matrix
    if np.max(np.abs(h - h.conj().T)) > 1e-8 * max(1.0, np.max(np.abs(h))):
        raise ValueError("non-Hermitian input")
    vals, vecs = np.linalg.eigh(h)
    if k is not None:
        if k > h.shape[0]:
            raise ValueError("k exceeds dimension")
        vals, vecs = vals[:k], vecs[:, :k]
    return vals, vecs


def permutation_operator(perm: np.ndarray, n_atoms: int,
                         model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    """Unitary permuting atoms: atom i's state is sent to atom perm[i]."""
    d = model.dim
    dim = d ** n_atoms
    perm = np.asarray(perm, dtype=int)
    # column k of the result is P|k>; (P psi)[j] = psi[j_perm[0], ...]
    op = np.eye(dim, dtype=complex).reshape((d,) * n_atoms + (dim,))
    op = np.transpose(op, tuple(perm) + (n_atoms,))
    return op.reshape(dim, dim)


def symmetry_label(vector: np.ndarray, symmetry: str, geometry, pattern,
                   hamiltonian: HamiltonianTerm,
                   degenerate_partners: np.ndarray | None = None) -> int:
    """Parity (+1/-1) of an eigenstate under a spatial symmetry.

    `symmetry` is 'mirror_y' or 'inversion'.  The permutation operator must
    commute with `hamiltonian` (checked).  If the state is degenerate, pass
    the partner eigenvectors (columns) so the label can be resolved by
    simultaneous diagonalization; the label of the input vector's component
    is returned.
    """
    from .geometry import inversion_permutation, mirror_y_permutation

    if symmetry == "mirror_y":
        perm = mirror_y_permutation(geometry)
    elif symmetry == "inversion":
        perm = inversion_permutation(geometry)
    else:
        raise ValueError(f"unknown symmetry {symmetry!r}")
    n = geometry.n_atoms
    model = AtomModel.QUBIT if hamiltonian.dim == 2 ** n else AtomModel.FIVE_LEVEL
    s = permutation_operator(perm, n, model)
    h = hamiltonian.matrix
    comm = s @ h - h @ s
    if np.max(np.abs(comm)) > 1e-8 * max(1.0, np.max(np.abs(h))):
        raise ValueError("symmetry operator does not commute with Hamiltonian")
    if degenerate_partners is not None:
        basis = np.column_stack([vector, degenerate_partners])
        q, _ = np.linalg.qr(basis)
        block = q.conj().T @ s @ q
        vals, vecs = np.linalg.eigh((block + block.conj().T) / 2)
        # component of the input vector with the largest weight
        weights = np.abs(vecs.conj().T @ (q.conj().T @ vector))
        lam = vals[int(np.argmax(weights))]
    else:
        sv = s @ vector
        lam = np.real(np.vdot(vector, sv))
        if np.linalg.norm(sv - lam * vector) > 1e-6 * np.linalg.norm(vector):
            raise ValueError("state is not an eigenstate of the symmetry")
    if abs(lam - 1) < 1e-6:
        return 1
    if abs(lam + 1) < 1e-6:
        return -1
    raise ValueError(f"symmetry eigenvalue {lam} is not +/-1")


# ---------------------------------------------------------------------------
# states

def basis_state(bits: str, model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    """Product basis vector from a per-atom level string, e.g. 'uud' or 'udg'.

    Symbols: u=up, d=down, g=ground, p=p6, r=reservoir.
    """
    key = {"u": UP, "d": DOWN, "g": GROUND, "p": P6, "r": RESERVOIR}
    idx = 0
    for ch in bits:
        level = key[ch]
        if level >= model.dim:
            raise ValueError(f"level {ch!r} not present in {model}")
        idx = idx * model.dim + level
    vec = np.zeros(model.dim ** len(bits), dtype=complex)
    vec[idx] = 1.0
    return vec


def w_state(model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    """Symmetric one-down-excitation state over three atoms."""
    return chi_state(0.0, model)


def chi_state(phi: float, model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    """Three-atom winding state (|uud> + e^{i phi}|udu> + e^{2i phi}|duu>)/sqrt(3).

    This is the state the phase imprint produces from the symmetric state:
    atom n acquires phase n*phi.  In the canonical triangle the atom order
    runs clockwise in the plane, so chi_state(2*pi/3) has chirality
    +2*sqrt(3) when the operator atoms are ordered counter-clockwise.
    """
    vec = (basis_state("uud", model)
           + np.exp(1j * phi) * basis_state("udu", model)
           + np.exp(2j * phi) * basis_state("duu", model))
    return vec / np.sqrt(3.0)


def chi_plus(model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    return chi_state(2.0 * np.pi / 3.0, model)


def chi_minus(model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    return chi_state(-2.0 * np.pi / 3.0, model)


def density_from_vector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def check_state(array: np.ndarray, kind: str = "vector",
                tol: float = 1e-9) -> None:
    """Validate normalization / Hermiticity / positivity of a state array."""
    if kind == "vector":
        if abs(np.linalg.norm(array) - 1.0) > tol:
            raise ValueError("state vector is not normalized")
    elif kind == "density":
        if np.max(np.abs(array - array.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(array).real - 1.0) > tol:
            raise ValueError("density matrix trace differs from 1")
        if np.min(np.linalg.eigvalsh((array + array.conj().T) / 2)) < -tol:
            raise ValueError("density matrix has negative eigenvalues")
    else:
        raise ValueError(f"unknown state kind {kind!r}")


@dataclass(frozen=True)
class QuantumState:
    """Dense state over an N-atom register: 'vector' or 'density' kind."""

    array: np.ndarray
    model: AtomModel
    n_atoms: int
    kind: str = "vector"

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=complex)
        dim = self.model.dim ** self.n_atoms
        expected = (dim,) if self.kind == "vector" else (dim, dim)
        if arr.shape != expected:
            raise ValueError(f"state shape {arr.shape} != {expected}")
        # tolerance looser than the integrator accuracy so that states
        # produced by long Lindblad integrations still validate
        check_state(arr, self.kind, tol=1e-6)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def dim(self) -> int:
        return self.model.dim ** self.n_atoms

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        return QuantumState(density_from_vector(self.array), self.model,
                            self.n_atoms, "density")

    def density_matrix(self) -> np.ndarray:
        return self.to_density().array

    def expectation(self, op: np.ndarray) -> float:
        if self.kind == "vector":
            val = np.vdot(self.array, op @ self.array)
        else:
            val = np.trace(op @ self.array)
        return complex(val).real


def total_sigma_z(n_atoms: int, model: AtomModel = AtomModel.QUBIT) -> np.ndarray:
    out = np.zeros((model.dim ** n_atoms,) * 2, dtype=complex)
    for i in range(n_atoms):
        out += embed(single_atom_op(model, SIGMA_Z), i, n_atoms, model)
    return out


def magnetization_sector_indices(n_atoms: int, n_up: int) -> np.ndarray:
    """Computational-basis indices of the qubit sector with n_up spins up."""
    idx = []
    for b in range(2 ** n_atoms):
        # bit 0 encodes 'up' in the (up, down) level order
        ups = n_atoms - bin(b).count("1")
        if ups == n_up:
            idx.append(b)
    return np.array(idx, dtype=int)
