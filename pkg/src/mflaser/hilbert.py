"""Truncated Fock space ⊗ two-level atom.

Basis ordering: index ``2*n + q`` where ``n`` is the photon number
(0..n_max) and ``q`` the atomic level, ``q = 0`` for the upper level
e₊ and ``q = 1`` for the lower level e₋. The atom index runs fastest,
which matches ``np.kron(field_op, atom_op)``.

All operators are dense ``complex128`` numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotHermitianError

HERMITIAN_TOL = 1e-10

SIGMA_PLUS_2 = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS_2 = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_3_2 = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class SpaceDescriptor:
    """Truncated space ℓ²(Z₊)⊗C² keeping Fock levels 0..n_max."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def idx(self, n: int, q: int) -> int:
        if not (0 <= n <= self.n_max and q in (0, 1)):
            raise IndexError(f"basis label ({n}, {q}) outside the truncated space")
        return 2 * n + q

    def label(self, i: int) -> tuple[int, int]:
        """Inverse of :meth:`idx`."""
        if not 0 <= i < self.dim:
            raise IndexError(i)
        return divmod(i, 2)

    def basis(self, n: int, q: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.idx(n, q)] = 1.0
        return v

    def photon_numbers(self) -> np.ndarray:
        """Photon number of every basis index, shape (dim,)."""
        return np.repeat(np.arange(self.n_max + 1), 2)

    def embed(self, field: np.ndarray | None = None, atom: np.ndarray | None = None) -> np.ndarray:
        """Tensor a field operator/vector with an atomic one in the index convention."""
        nf = self.n_max + 1
        if field is None:
            field = np.eye(nf, dtype=complex)
        if atom is None:
            atom = np.eye(2, dtype=complex)
        return np.kron(np.asarray(field, dtype=complex), np.asarray(atom, dtype=complex))


@dataclass(frozen=True)
class OperatorSet:
    space: SpaceDescriptor
    a: np.ndarray
    a_dag: np.ndarray
    n_op: np.ndarray
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    sigma_3: np.ndarray
    identity: np.ndarray


def annihilation(n_levels: int) -> np.ndarray:
    """Single-mode annihilation operator on Fock levels 0..n_levels-1."""
    return np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), 1).astype(complex)


def build_operators(space: SpaceDescriptor) -> OperatorSet:
    """Ladder, number and Pauli operators on the truncated space.

    The creation operator is the exact adjoint of the truncated
    annihilator, so it maps the top Fock level to zero and
    ``[a, a†]`` equals the identity except on the n_max block, where it
    is ``-n_max``.
    """
    if space.n_max < 1:
        raise ValueError("n_max must be >= 1")
    a_field = annihilation(space.n_max + 1)
    a = space.embed(field=a_field)
    a_dag = a.conj().T.copy()
    ops = OperatorSet(
        space=space,
        a=a,
        a_dag=a_dag,
        n_op=a_dag @ a,
        sigma_plus=space.embed(atom=SIGMA_PLUS_2),
        sigma_minus=space.embed(atom=SIGMA_MINUS_2),
        sigma_3=space.embed(atom=SIGMA_3_2),
        identity=np.eye(space.dim, dtype=complex),
    )
    for m in (ops.a, ops.a_dag, ops.n_op, ops.sigma_plus, ops.sigma_minus, ops.sigma_3):
        m.setflags(write=False)
    return ops


def _check_square(*mats):
    shape = None
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        if shape is not None and m.shape != shape:
            raise DimensionError(f"shape mismatch: {shape} vs {m.shape}")
        shape = m.shape


def adjoint(A):
    A = np.asarray(A)
    _check_square(A)
    return A.conj().T


def commutator(A, B):
    A, B = np.asarray(A), np.asarray(B)
    _check_square(A, B)
    return A @ B - B @ A


def apply(A, x):
    A, x = np.asarray(A), np.asarray(x)
    _check_square(A)
    if x.shape[0] != A.shape[1]:
        raise DimensionError(f"cannot apply {A.shape} operator to vector of length {x.shape[0]}")
    return A @ x


def trace(A) -> complex:
    A = np.asarray(A)
    _check_square(A)
    return complex(np.trace(A))


def expectation(A, rho) -> complex:
    """tr(A ρ), computed without forming the product."""
    A, rho = np.asarray(A), np.asarray(rho)
    _check_square(A, rho)
    return complex(np.einsum("ij,ji->", A, rho))


def frobenius_distance(A, B) -> float:
    A, B = np.asarray(A), np.asarray(B)
    _check_square(A, B)
    return float(np.linalg.norm(A - B))


def trace_distance(rho, sigma) -> float:
    """Half the sum of singular values of ρ − σ."""
    rho, sigma = np.asarray(rho), np.asarray(sigma)
    _check_square(rho, sigma)
    return 0.5 * float(np.sum(np.linalg.svd(rho - sigma, compute_uv=False)))


def hermiticity_error(A) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def hermitian_eigen(A, tol: float = HERMITIAN_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    Raises
    ------
    NotHermitianError
        If any entry of ``A - A†`` exceeds ``tol`` in modulus.
    """
    A = np.asarray(A, dtype=complex)
    _check_square(A)
    err = hermiticity_error(A)
    if err > tol:
        raise NotHermitianError(f"matrix is not Hermitian: max |A - A†| = {err:.3e} > {tol:.1e}")
    return np.linalg.eigh(0.5 * (A + A.conj().T))


def coherent_amplitudes(alpha: complex, n_levels: int) -> np.ndarray:
    """Fock amplitudes of a coherent state, renormalised on the truncation."""
    n = np.arange(n_levels)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    mag = np.exp(-0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * logfact) if alpha != 0 else (n == 0).astype(float)
    amps = mag * np.exp(1j * n * np.angle(alpha))
    return amps / np.linalg.norm(amps)
