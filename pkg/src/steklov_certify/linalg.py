"""Dense and sparse direct solvers plus a generalized symmetric eigensolver.

The eigensolver handles pencils (A, B) with A symmetric positive definite
and B symmetric positive semidefinite, the shape of every pencil in this
package.  When B is only semidefinite its kernel directions carry no
finite eigenvalues; the solver eliminates the structural zero rows of B
with a Schur complement of A and solves the reduced reciprocal problem
B* w = mu A* w, so the finite eigenvalues are returned exactly once and
with B-orthonormal eigenvectors.

Factorizations are deterministic direct methods: dense Cholesky / LAPACK
eigh for the small conforming systems and a sparse LU for the large mixed
saddle systems.  Solutions are verified against a residual tolerance and
rejected loudly rather than returned silently wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "CholeskyFactor",
    "EigenResult",
    "LinearAlgebraError",
    "NotPositiveDefiniteError",
    "SaddleFactor",
    "SingularSystemError",
    "general_sym_eig",
    "solve_saddle",
    "solve_spd",
]

_RESIDUAL_TOL = 1e-10
_RANK_TOL = 1e-12


class LinearAlgebraError(RuntimeError):
    pass


class NotPositiveDefiniteError(LinearAlgebraError):
    """A matrix required to be symmetric positive definite is not."""


class SingularSystemError(LinearAlgebraError):
    """A direct factorization hit an (numerically) singular matrix."""


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)


def _check_residual(apply_op, x, b, what):
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return
    rel = np.linalg.norm(apply_op(x) - b) / bn
    if not rel <= _RESIDUAL_TOL:
        raise LinearAlgebraError(f"{what}: relative residual {rel:.3e} exceeds {_RESIDUAL_TOL:.0e}")


class CholeskyFactor:
    """Dense Cholesky factorization of a symmetric positive definite matrix."""

    def __init__(self, a):
        a = _dense(a)
        try:
            self._factor = sla.cho_factor(a, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from exc
        self._a = a

    def solve(self, b, check=True):
        b = _dense(b)
        x = sla.cho_solve(self._factor, b, check_finite=False)
        if check:
            _check_residual(lambda v: self._a @ v, x, b, "Cholesky solve")
        return x


def solve_spd(a, b):
    """Solve a x = b with a symmetric positive definite (dense or sparse)."""
    return CholeskyFactor(a).solve(b)


class SaddleFactor:
    """Sparse LU of a symmetric indefinite (saddle point) matrix."""

    def __init__(self, m):
        m = sp.csc_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"saddle matrix must be square, got {m.shape}")
        try:
            self._lu = spla.splu(m)
        except RuntimeError as exc:
            deficiency = ""
            if m.shape[0] <= 2000:
                rank = np.linalg.matrix_rank(m.toarray())
                deficiency = f" (rank deficiency {m.shape[0] - rank})"
            raise SingularSystemError(f"saddle matrix is singular{deficiency}: {exc}") from exc
        self._m = m.tocsr()

    def solve(self, b, check=True):
        b = _dense(b)
        x = self._lu.solve(b)
        if check:
            _check_residual(lambda v: self._m @ v, x, b, "saddle solve")
        return x


def solve_saddle(m, b):
    """Solve the sparse symmetric indefinite system m x = b."""
    return SaddleFactor(m).solve(b)


@dataclass(frozen=True)
class EigenResult:
    """Selected eigenpairs of a symmetric pencil.

    values are ascending for which="smallest" selections and descending
    for which="largest"; vectors (columns) are B-orthonormal; n_finite is
    the total number of finite eigenvalues of the pencil.
    """

    values: np.ndarray
    vectors: np.ndarray
    n_finite: int


def _select(values, vectors, k, which):
    if which == "smallest":
        return values[:k], vectors[:, :k]
    return values[::-1][:k], vectors[:, ::-1][:, :k]


def general_sym_eig(a, b, k=None, which="smallest"):
    """Finite eigenpairs of the symmetric pencil a x = lambda b x.

    Accepts either a positive definite b (a anything symmetric) or a
    positive semidefinite b together with an SPD a.  Structural zero rows
    of b are eliminated exactly: with the dofs split into the support of
    b and its complement, the Schur complement of a on the support block
    turns the pencil into b* w = mu a* w with a* SPD, whose positive mu
    are the reciprocals of the finite lambda; the same reciprocal route
    handles a b that spans every dof but is still singular.  Requesting
    which="largest" selects from the top of the finite spectrum.
    """
    if which not in ("smallest", "largest"):
        raise ValueError(f"which must be 'smallest' or 'largest', got {which!r}")
    b_sp = sp.csr_matrix(b)
    b_sp.eliminate_zeros()
    n = b_sp.shape[0]
    support = np.unique(b_sp.indices) if b_sp.nnz else np.array([], dtype=np.int64)
    if support.size == 0:
        raise LinearAlgebraError("b is zero: the pencil has no finite eigenvalues")

    a_dense = _dense(a)
    if support.size == n:
        # full structural support: when b is actually positive definite
        # the pencil is a plain dense problem; a singular b falls through
        # to the reciprocal formulation below, which only needs a SPD.
        try:
            values, vectors = sla.eigh(a_dense, _dense(b), check_finite=False)
        except sla.LinAlgError:
            pass
        else:
            n_finite = n
            if k is None:
                k = n_finite
            if k > n_finite:
                raise LinearAlgebraError(f"requested {k} eigenpairs, pencil has {n_finite}")
            values, vectors = _select(values, vectors, k, which)
            return EigenResult(values, vectors, n_finite)

    mask = np.zeros(n, dtype=bool)
    mask[support] = True
    idx_b = np.nonzero(mask)[0]
    idx_i = np.nonzero(~mask)[0]
    a_bb = a_dense[np.ix_(idx_b, idx_b)]
    if idx_i.size:
        a_ii = a_dense[np.ix_(idx_i, idx_i)]
        a_ib = a_dense[np.ix_(idx_i, idx_b)]
        try:
            factor = sla.cho_factor(a_ii, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"interior block of a is not SPD: {exc}") from exc
        x = sla.cho_solve(factor, a_ib, check_finite=False)
        a_schur = a_bb - a_ib.T @ x
    else:
        x = np.zeros((0, idx_b.size))
        a_schur = a_bb
    a_schur = 0.5 * (a_schur + a_schur.T)
    b_bb = _dense(b_sp[np.ix_(idx_b, idx_b)])

    try:
        mu, w = sla.eigh(b_bb, a_schur, check_finite=False)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Schur complement of a is not SPD: {exc}") from exc
    mu_max = mu[-1]
    if mu_max <= 0.0:
        raise LinearAlgebraError("b has no positive directions: no finite eigenvalues")
    if mu[0] < -1e-8 * mu_max:
        raise LinearAlgebraError(f"b is indefinite (most negative direction {mu[0]:.3e})")
    finite = mu > _RANK_TOL * mu_max
    n_finite = int(finite.sum())
    if k is None:
        k = n_finite
    if k > n_finite:
        raise LinearAlgebraError(f"requested {k} eigenpairs, pencil has {n_finite} finite ones")

    mu_f = mu[finite][::-1]  # ascending lambda = 1/mu
    w_f = w[:, finite][:, ::-1]
    values = 1.0 / mu_f
    scale = 1.0 / np.sqrt(mu_f)
    vectors = np.zeros((n, len(mu_f)))
    vectors[idx_b] = w_f * scale[None, :]
    vectors[idx_i] = -x @ vectors[idx_b]
    values, vectors = _select(values, vectors, k, which)
    return EigenResult(values, vectors, n_finite)
