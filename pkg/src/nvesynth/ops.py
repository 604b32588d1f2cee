"""Dense operator algebra on tensor-product Hilbert spaces.

The global factor order is (qubit, mode 1, mode 2, cavity), and the qubit basis
is ordered (e, g) so that index 0 is the excited state. Every value type here
is an immutable wrapper around a numpy array; functions never mutate inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "HilbertSpace",
    "Operator",
    "StateVector",
    "DensityMatrix",
    "identity",
    "annihilation",
    "creation",
    "number",
    "sigma_eg",
    "sigma_ge",
    "sigma_z_half",
    "sigma_x",
    "sigma_y",
    "tensor",
    "embed",
    "propagator_exact",
    "expectation",
    "partial_trace",
    "basis_state",
    "hermiticity_residual",
]

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor-product layout.

    Parameters
    ----------
    factor_dims : tuple of int
        Subsystem dimensions. A single-factor space is allowed for building
        the local operators that are later combined with :func:`tensor`.
    """

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims:
            raise ValueError("a Hilbert space needs at least one factor")
        if any(d < 1 for d in dims):
            raise ValueError(f"factor dimensions must be positive, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def index(self, labels: Sequence[int]) -> int:
        """Flat basis index of a product basis state."""
        if len(labels) != self.n_factors:
            raise ValueError(f"expected {self.n_factors} labels, got {len(labels)}")
        for lab, d in zip(labels, self.factor_dims):
            if not 0 <= lab < d:
                raise ValueError(f"label {tuple(labels)} outside {self.factor_dims}")
        return int(np.ravel_multi_index(tuple(labels), self.factor_dims))

    def labels(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.factor_dims))


@dataclass(frozen=True)
class Operator:
    """Square complex matrix acting on ``space``."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {d}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _same_space(self.space, other.space)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return hermiticity_residual(self.matrix) <= rtol


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state."""

    space: HilbertSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).ravel()
        if v.shape != (self.space.dim,):
            raise ValueError(f"vector length {v.size} does not match space dimension {self.space.dim}")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > 1e-9:
            raise ValueError(f"state norm {nrm:.12g} differs from 1")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "amplitudes", v)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {d}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-10:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"density matrix trace {tr:.12g} differs from 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -1e-9:
            raise ValueError("density matrix has a negative eigenvalue")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def _same_space(a: HilbertSpace, b: HilbertSpace) -> None:
    if a.factor_dims != b.factor_dims:
        raise ValueError(f"space mismatch: {a.factor_dims} vs {b.factor_dims}")


def hermiticity_residual(m: np.ndarray) -> float:
    """Relative Frobenius norm of the anti-Hermitian part."""
    m = np.asarray(m)
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(m - m.conj().T) / scale)


def _local(matrix: np.ndarray) -> Operator:
    return Operator(HilbertSpace((matrix.shape[0],)), matrix)


def identity(dim: int) -> Operator:
    return _local(np.eye(dim, dtype=complex))


def annihilation(dim: int) -> Operator:
    """Truncated lowering operator with ``a[n-1, n] = sqrt(n)``."""
    if dim < 1:
        raise ValueError("annihilation operator needs dim >= 1")
    return _local(np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex))


def creation(dim: int) -> Operator:
    return annihilation(dim).dag


def number(dim: int) -> Operator:
    return _local(np.diag(np.arange(dim, dtype=float)).astype(complex))


def sigma_eg() -> Operator:
    """Raising operator |e><g| in the (e, g) ordering."""
    return _local(np.array([[0, 1], [0, 0]], dtype=complex))


def sigma_ge() -> Operator:
    return sigma_eg().dag


def sigma_z_half() -> Operator:
    """S_z = (|e><e| - |g><g|)/2."""
    return _local(np.diag([0.5, -0.5]).astype(complex))


def sigma_x() -> Operator:
    return _local(np.array([[0, 1], [1, 0]], dtype=complex))


def sigma_y() -> Operator:
    # sigma_y = -i sigma_eg + i sigma_ge in the (e, g) ordering
    return _local(np.array([[0, -1j], [1j, 0]], dtype=complex))


def tensor(factors: Iterable[Operator], space: HilbertSpace | None = None) -> Operator:
    """Kronecker product of local operators in factor order.

    Parameters
    ----------
    factors : iterable of Operator
        Operators on the individual factors, first factor outermost.
    space : HilbertSpace, optional
        Declared target layout; raises if the factor dimensions disagree.
    """
    factors = list(factors)
    if not factors:
        raise ValueError("tensor needs at least one factor")
    dims = tuple(d for f in factors for d in f.space.factor_dims)
    if space is not None and space.factor_dims != dims:
        raise ValueError(f"factor dimensions {dims} do not match declared space {space.factor_dims}")
    mat = reduce(np.kron, (f.matrix for f in factors))
    return Operator(space or HilbertSpace(dims), mat)


def embed(op: Operator, factor_index: int, space: HilbertSpace) -> Operator:
    """Place a single-factor operator at ``factor_index`` with identities elsewhere."""
    if not 0 <= factor_index < space.n_factors:
        raise IndexError(f"factor index {factor_index} out of range for {space.factor_dims}")
    if op.space.dim != space.factor_dims[factor_index]:
        raise ValueError(
            f"operator dimension {op.space.dim} does not match factor "
            f"{factor_index} of dimension {space.factor_dims[factor_index]}"
        )
    left = int(np.prod(space.factor_dims[:factor_index]))
    right = int(np.prod(space.factor_dims[factor_index + 1 :]))
    mat = np.kron(np.kron(np.eye(left), op.matrix), np.eye(right))
    return Operator(space, mat)


def propagator_exact(H: Operator, t: float) -> Operator:
    """Unitary ``exp(-i H t)`` from the Hermitian eigendecomposition of ``H``."""
    if not H.is_hermitian():
        raise ValueError(f"propagator_exact needs a Hermitian operator (residual {hermiticity_residual(H.matrix):.3g})")
    m = 0.5 * (H.matrix + H.matrix.conj().T)
    w, v = linalg.eigh(m)
    return Operator(H.space, (v * np.exp(-1j * w * t)) @ v.conj().T)


def expectation(state: StateVector | DensityMatrix, op: Operator) -> complex:
    """<psi|O|psi> for pure states, tr(rho O) for mixed states."""
    _same_space(state.space, op.space)
    if isinstance(state, StateVector):
        psi = state.amplitudes
        return complex(psi.conj() @ (op.matrix @ psi))
    return complex(np.einsum("ij,ji->", state.matrix, op.matrix))


def partial_trace(rho: DensityMatrix | StateVector, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on the factors listed in ``keep``, in their original factor order."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("partial_trace needs at least one factor to keep")
    space = rho.space
    n = space.n_factors
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"keep indices {keep} out of range for {n} factors")
    if isinstance(rho, StateVector):
        rho = rho.to_density()
    dims = space.factor_dims
    t = rho.matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract each traced factor's row and column index
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    kdims = tuple(dims[i] for i in keep)
    d = int(np.prod(kdims))
    m = red.reshape(d, d)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(HilbertSpace(kdims), m)


def basis_state(space: HilbertSpace, labels: Sequence[int]) -> StateVector:
    """Product basis state with the given per-factor labels."""
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(labels)] = 1.0
    return StateVector(space, v)
