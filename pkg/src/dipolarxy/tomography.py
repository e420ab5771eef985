"""Maximum-likelihood tomography of the 3-atom register from 27-basis data.

The density matrix is parametrized as rho(T) = T^dag T / Tr(T^dag T) with T
an 8x8 lower-triangular matrix with real diagonal (64 real parameters), so
every parameter vector maps to a valid state.  The fit minimizes the
least-squares cost sum_ab (p_model - p_data)^2 over all bases a and
outcomes b with an analytic gradient and a quasi-Newton minimizer.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .geometry import AddressingPattern, single_triangle_pattern
from .hilbert import AtomModel
from .pulses import ALL_BASES, MeasurementBasis, compile_measurement_basis, \
    program_unitary

DIM = 8
N_PARAMS = 64
WITNESS_THRESHOLD = 2.0 / 3.0

# parameter layout: 8 diagonal entries, then (real, imag) pairs for the 28
# strictly-lower-triangular entries in row-major order
_LOWER = [(i, j) for i in range(DIM) for j in range(i)]


@dataclass(frozen=True)
class CholeskyParams:
    """64 real parameters for the positivity-guaranteeing factor T."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"need {N_PARAMS} real parameters")
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls) -> "CholeskyParams":
        v = np.zeros(N_PARAMS)
        v[:DIM] = 1.0 / np.sqrt(DIM)
        return cls(v)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 0.5
               ) -> "CholeskyParams":
        return cls(rng.normal(scale=scale, size=N_PARAMS))

    def factor(self) -> np.ndarray:
        t = np.zeros((DIM, DIM), dtype=complex)
        t[np.diag_indices(DIM)] = self.values[:DIM]
        off = self.values[DIM:]
        for k, (i, j) in enumerate(_LOWER):
            t[i, j] = off[2 * k] + 1j * off[2 * k + 1]
        return t

    def density(self) -> np.ndarray:
        t = self.factor()
        g = t.conj().T @ t
        return g / np.trace(g).real


def _params_from_factor(t: np.ndarray) -> CholeskyParams:
    v = np.zeros(N_PARAMS)
    v[:DIM] = np.real(np.diag(t))
    for k, (i, j) in enumerate(_LOWER):
        v[DIM + 2 * k] = t[i, j].real
        v[DIM + 2 * k + 1] = t[i, j].imag
    return CholeskyParams(v)


@dataclass
class TomographyDataset:
    """Outcome probabilities per measurement basis.

    probabilities: {basis label: length-8 array over outcomes, ordered as
    bitstrings uuu..ddd with up = 0}; shot_counts: {label: n} (optional).
    """

    probabilities: dict
    shot_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for label, p in self.probabilities.items():
            p = np.asarray(p, dtype=float)
            if p.shape != (DIM,):
                raise ValueError(f"basis {label}: need {DIM} outcome entries")
            if abs(p.sum() - 1.0) > 1e-6:
                raise ValueError(f"basis {label}: probabilities sum to "
                                 f"{p.sum()}, not 1")
            self.probabilities[label] = p

    @property
    def labels(self) -> list:
        return sorted(self.probabilities)

    def is_complete(self) -> bool:
        return len(self.probabilities) == len(ALL_BASES)


def _bitstring(idx: int) -> str:
    return "".join("u" if (idx >> (2 - a)) & 1 == 0 else "d"
                   for a in range(3))


def read_dataset_csv(path) -> TomographyDataset:
    """Read (basis, outcome, probability-or-count) rows; counts normalized."""
    raw = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["basis"]
            out = row["outcome"]
            val = float(row.get("probability") or row.get("count"))
            idx = 0
            for ch in out:
                idx = idx * 2 + (0 if ch == "u" else 1)
            raw.setdefault(label, np.zeros(DIM))[idx] += val
    probs = {}
    counts = {}
    for label, vals in raw.items():
        total = vals.sum()
        probs[label] = vals / total
        if not np.isclose(total, 1.0):
            counts[label] = int(round(total))
    return TomographyDataset(probs, counts)


def write_dataset_csv(path, dataset: TomographyDataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "outcome", "probability"])
        for label in dataset.labels:
            for idx, p in enumerate(dataset.probabilities[label]):
                w.writerow([label, _bitstring(idx), repr(float(p))])


def basis_rotation(label: str,
                   pattern: Optional[AddressingPattern] = None) -> np.ndarray:
    """Ideal compiled rotation C for a basis label; z stats of C psi are
    the target-basis stats of psi."""
    if pattern is None:
        pattern = single_triangle_pattern()
    program = compile_measurement_basis(MeasurementBasis.from_label(label))
    return program_unitary(program, pattern, AtomModel.QUBIT)


def forward_model(rho: np.ndarray, label: str,
                  pattern: Optional[AddressingPattern] = None) -> np.ndarray:
    """Outcome probabilities of measuring `rho` in the given basis."""
    u = basis_rotation(label, pattern)
    p = np.real(np.diag(u @ rho @ u.conj().T))
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def dataset_from_state(rho: np.ndarray,
                       pattern: Optional[AddressingPattern] = None
                       ) -> TomographyDataset:
    """Noiseless 27-basis dataset from a density matrix."""
    return TomographyDataset({b.label: forward_model(rho, b.label, pattern)
                              for b in ALL_BASES})


@dataclass(frozen=True)
class ReconstructedState:
    """MLE result: density matrix plus optimizer diagnostics."""

    rho: np.ndarray
    cost: float
    n_iterations: int
    gradient_norm: float
    converged: bool
    n_bases: int


def _cost_and_grad(x: np.ndarray, rotations: np.ndarray,
                   data: np.ndarray) -> tuple:
    params = CholeskyParams(x)
    t = params.factor()
    g = t.conj().T @ t
    tau = np.trace(g).real
    rho = g / tau
    # model probabilities for all bases at once
    ur = rotations @ rho  # (B, 8, 8)
    probs = np.real(np.einsum("aij,aij->ai", ur, rotations.conj()))
    diff = probs - data
    cost = float(np.sum(diff ** 2))
    # A = dC/drho (Hermitian): sum_a U^dag diag(2 diff_a) U
    a = np.einsum("aij,ai,aik->jk", rotations.conj(), 2.0 * diff, rotations)
    # Wirtinger gradient wrt conj(T) of C(rho(T))
    gmat = t @ (a - np.trace(a @ rho).real * np.eye(DIM)) / tau
    grad = np.zeros(N_PARAMS)
    grad[:DIM] = 2.0 * np.real(np.diag(gmat))
    for k, (i, j) in enumerate(_LOWER):
        grad[DIM + 2 * k] = 2.0 * gmat[i, j].real
        grad[DIM + 2 * k + 1] = 2.0 * gmat[i, j].imag
    return cost, grad


def mle_reconstruct(dataset: TomographyDataset,
                    init: Optional[CholeskyParams] = None,
                    pattern: Optional[AddressingPattern] = None,
                    n_restarts: int = 8, seed: int = 0,
                    gtol: float = 1e-8, max_iterations: int = 10000
                    ) -> ReconstructedState:
    """Least-squares MLE over the Cholesky parametrization.

    Runs the quasi-Newton minimizer from the identity (maximally mixed)
    start plus `n_restarts` random starts and returns the lowest cost.
    """
    labels = dataset.labels
    if len(labels) < len(ALL_BASES):
        warnings.warn(f"only {len(labels)} of {len(ALL_BASES)} bases "
                      "present; reconstruction may be rank-deficient")
    rotations = np.stack([basis_rotation(lb, pattern) for lb in labels])
    data = np.stack([dataset.probabilities[lb] for lb in labels])

    starts = [init if init is not None else CholeskyParams.identity()]
    rng = np.random.default_rng(seed)
    starts += [CholeskyParams.random(rng) for _ in range(n_restarts)]

    best = None
    for start in starts:
        res = minimize(_cost_and_grad, start.values, jac=True,
                       args=(rotations, data), method="L-BFGS-B",
                       options={"gtol": gtol, "ftol": 0.0,
                                "maxiter": max_iterations})
        if best is None or res.fun < best.fun:
            best = res
    gnorm = float(np.max(np.abs(best.jac)))
    converged = gnorm < gtol or best.success
    if not converged:
        warnings.warn(f"minimizer exited without convergence "
                      f"(cost {best.fun:.3e}, grad norm {gnorm:.3e})")
    rho = CholeskyParams(best.x).density()
    return ReconstructedState(rho, float(best.fun), int(best.nit),
                              gnorm, converged, len(labels))


def fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """Overlap <psi|rho|psi> with a pure target state."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    val = np.real(np.vdot(psi, rho @ psi))
    return float(val)


def entanglement_witness(rho: np.ndarray, psi: np.ndarray) -> bool:
    """True iff the fidelity exceeds the genuine-tripartite bound 2/3."""
    return fidelity(rho, psi) > WITNESS_THRESHOLD


def reconstruction_report(result: ReconstructedState,
                          targets: Optional[dict] = None) -> dict:
    """JSON-serializable summary of a reconstruction."""
    out = {
        "rho_real": result.rho.real.tolist(),
        "rho_imag": result.rho.imag.tolist(),
        "cost": result.cost,
        "n_iterations": result.n_iterations,
        "gradient_norm": result.gradient_norm,
        "converged": result.converged,
        "n_bases": result.n_bases,
    }
    if targets:
        out["fidelities"] = {
            name: {"value": fidelity(result.rho, psi),
                   "witness": entanglement_witness(result.rho, psi)}
            for name, psi in targets.items()}
    return out


def write_reconstruction_json(path, result: ReconstructedState,
                              targets: Optional[dict] = None) -> None:
    with open(path, "w") as fh:
        json.dump(reconstruction_report(result, targets), fh, indent=2)
