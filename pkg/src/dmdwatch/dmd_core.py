"""Numerical kernel: exact and compressed dynamic mode decomposition.

Everything here is a pure function of its arguments.  The decomposition
pipeline for one batch of snapshots is

    pair -> compress -> reduced_svd -> build_reduced_operator
         -> eigendecompose -> continuous_spectrum / recover_modes

with ``reduced_dmd`` bundling the compressed stages (plus effective-rank
handling) into a single call.  ``exact_dmd`` computes the full-dimension
operator by pseudo-inversion and serves as the brute-force reference the
compressed path is tested against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, NumericalError, ParameterError, ShapeError

log = logging.getLogger(__name__)

# Singular values below SIGMA_RTOL * sigma_max are treated as zero when the
# diagonal factor is pseudo-inverted, so effective-rank collapse in static
# windows does not blow up the reduced operator.
SIGMA_RTOL = 1e-12

# |log(lambda)| substituted when an eigenvalue is exactly zero.
LOG_ZERO_SENTINEL = 1e6

# Mode matrices with a condition number above this are flagged.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Snapshot:
    """One vectorized grayscale frame.

    ``values`` holds intensities in [0, 1], ``index`` is the position in the
    stream and ``timestep_h`` the seconds between consecutive snapshots.
    """

    values: np.ndarray
    index: int = 0
    timestep_h: float = 1.0 / 30.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ShapeError("snapshot must be a nonempty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ParameterError("snapshot contains non-finite values")
        if self.timestep_h <= 0:
            raise ParameterError("timestep_h must be positive")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DataMatrixPair:
    """Time-shifted data matrices: column j of Y follows column j of X."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X))
        Y = np.atleast_2d(np.asarray(self.Y))
        if X.shape != Y.shape:
            raise ShapeError(f"X and Y must match, got {X.shape} vs {Y.shape}")
        if X.size == 0:
            raise ShapeError("data matrices must be nonempty")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_snapshots(cls, W: np.ndarray) -> "DataMatrixPair":
        """Split an M x (N+1) snapshot matrix into the shifted pair."""
        W = np.atleast_2d(np.asarray(W))
        if W.shape[1] < 2:
            raise ShapeError("need at least two snapshots")
        return cls(W[:, :-1], W[:, 1:])


@dataclass(frozen=True)
class CompressionOperator:
    """Random p x M sketching matrix with i.i.d. uniform [0, 1) entries.

    Drawing the matrix is a one-time cost: the same operator is applied to
    every frame of a run, so construction requires an explicit seed.
    """

    entries: np.ndarray
    seed: int

    @classmethod
    def draw(cls, p: int, m: int, seed: int) -> "CompressionOperator":
        if p < 1 or m < 1:
            raise ParameterError("sketch dimensions must be positive")
        entries = np.random.default_rng(seed).random((p, m))
        return cls(entries=entries, seed=seed)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class ReducedSVD:
    """Rank-r factorization X' ~= U @ diag(sigma) @ V.conj().T."""

    U: np.ndarray        # p x r, orthonormal columns
    sigma: np.ndarray    # r nonnegative values, nonincreasing
    V: np.ndarray        # N x r, orthonormal columns

    @property
    def rank(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class ReducedOperator:
    """The r x r projection of the one-step propagator."""

    matrix: np.ndarray


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues and right eigenvectors of a reduced operator.

    ``residual`` is the max-norm of A @ Q - Q @ diag(lambdas); values above
    ~1e-8 indicate a defective (non-diagonalizable) operator and are reported
    rather than hidden.
    """

    lambdas: np.ndarray  # complex, canonically ordered
    Q: np.ndarray        # complex eigenvector columns, same order
    residual: float = 0.0


@dataclass(frozen=True)
class ContinuousSpectrum:
    """Continuous-time eigenvalues omega = log(lambda) / h and their moduli."""

    omegas: np.ndarray
    moduli: np.ndarray
    h: float = 1.0


@dataclass(frozen=True)
class ModeSet:
    """Full-dimension modes (columns of Phi) and their amplitudes."""

    Phi: np.ndarray
    amplitudes: np.ndarray
    condition: float = 0.0


@dataclass(frozen=True)
class ReducedDMD:
    """Result of the compressed pipeline on one window.

    ``lambdas`` always has length r: the eigenvalues computed from the
    effective-rank operator, padded with 1 for every truncated direction
    (a rank-collapsed direction carries no dynamics, i.e. behaves as static
    background).  ``eig`` holds only the computed eigenpairs; it is None
    when the window is fully degenerate.
    """

    lambdas: np.ndarray
    effective_rank: int
    degenerate: bool
    svd: ReducedSVD | None
    operator: ReducedOperator | None
    eig: EigenSystem | None


def canonical_order(lambdas: np.ndarray) -> np.ndarray:
    """Deterministic eigenvalue ordering: |lambda| descending, ties by
    ascending argument (conjugate pairs sort as lower half-plane first)."""
    lambdas = np.asarray(lambdas)
    return np.lexsort((np.angle(lambdas), -np.abs(lambdas)))


def exact_dmd(pair: DataMatrixPair) -> np.ndarray:
    """Least-squares one-step propagator A = Y @ pinv(X) (M x M).

    Minimizes ||Y - A X||_F over all A.  Quadratic in M, so only suitable
    for modest dimensions; used as the reference the sketched path is
    checked against.
    """
    if not np.all(np.isfinite(pair.X)) or not np.all(np.isfinite(pair.Y)):
        raise ParameterError("data must be finite")
    return pair.Y @ np.linalg.pinv(pair.X)


def compress(C: CompressionOperator, pair: DataMatrixPair) -> DataMatrixPair:
    """Sketch both data matrices: X' = C X, Y' = C Y."""
    if C.m != pair.X.shape[0]:
        raise ShapeError(
            f"operator has {C.m} columns, data has {pair.X.shape[0]} rows"
        )
    return DataMatrixPair(C.entries @ pair.X, C.entries @ pair.Y)


def reduced_svd(Xp: np.ndarray, r: int) -> ReducedSVD:
    """Best rank-r factorization of the (compressed) first data matrix."""
    Xp = np.atleast_2d(np.asarray(Xp))
    if not 1 <= r <= min(Xp.shape):
        raise ParameterError(
            f"rank {r} outside [1, {min(Xp.shape)}] for shape {Xp.shape}"
        )
    U, s, Vh = np.linalg.svd(Xp, full_matrices=False)
    if effective_rank_of(s) < r:
        log.debug(
            "rank-%d truncation requested but effective rank is %d",
            r, effective_rank_of(s),
        )
    return ReducedSVD(U=U[:, :r], sigma=s[:r], V=Vh[:r].conj().T)


def effective_rank_of(sigma: np.ndarray) -> int:
    """Number of singular values above the relative zero threshold."""
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.sum(sigma > SIGMA_RTOL * sigma[0]))


def truncate_svd(svd: ReducedSVD, q: int) -> ReducedSVD:
    """Keep only the leading q singular triplets."""
    if not 1 <= q <= svd.rank:
        raise ParameterError(f"q={q} outside [1, {svd.rank}]")
    return ReducedSVD(U=svd.U[:, :q], sigma=svd.sigma[:q], V=svd.V[:, :q])


def build_reduced_operator(svd: ReducedSVD, Yp: np.ndarray) -> ReducedOperator:
    """Project the propagator: A_r = U* Y' V inv(Sigma).

    The diagonal inverse is thresholded: entries below SIGMA_RTOL times the
    largest singular value map to zero instead of blowing up.
    """
    Yp = np.atleast_2d(np.asarray(Yp))
    if Yp.shape[0] != svd.U.shape[0] or Yp.shape[1] != svd.V.shape[0]:
        raise ShapeError(
            f"second matrix {Yp.shape} inconsistent with factors "
            f"{svd.U.shape[0]}x{svd.V.shape[0]}"
        )
    if effective_rank_of(svd.sigma) == 0:
        raise DegenerateDataError("all singular values are zero")
    sig_inv = np.where(
        svd.sigma > SIGMA_RTOL * svd.sigma[0], 1.0 / svd.sigma, 0.0
    )
    return ReducedOperator((svd.U.conj().T @ Yp @ svd.V) * sig_inv)


def eigendecompose(op: ReducedOperator) -> EigenSystem:
    """Eigenpairs of the reduced operator in canonical order."""
    A = op.matrix
    if not np.all(np.isfinite(A)):
        raise ParameterError("operator has non-finite entries")
    try:
        lambdas, Q = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}", payload=A) from exc
    order = canonical_order(lambdas)
    lambdas, Q = lambdas[order], Q[:, order]
    residual = float(np.max(np.abs(A @ Q - Q * lambdas))) if A.size else 0.0
    if residual > 1e-8:
        log.warning("eigen residual %.3e suggests a defective operator", residual)
    return EigenSystem(lambdas=lambdas, Q=Q, residual=residual)


def continuous_spectrum(
    eig: EigenSystem | np.ndarray,
    h: float = 1.0,
    zero_sentinel: float = LOG_ZERO_SENTINEL,
) -> ContinuousSpectrum:
    """Map eigenvalues to omega = log(lambda) / h on the principal branch.

    A zero eigenvalue has no logarithm; its modulus is replaced by
    ``zero_sentinel`` (and the omega entry by the sentinel as well) with a
    diagnostic logged.
    """
    if h <= 0:
        raise ParameterError("h must be positive")
    lambdas = eig.lambdas if isinstance(eig, EigenSystem) else np.asarray(eig)
    lambdas = lambdas.astype(complex)
    zero = lambdas == 0
    if np.any(zero):
        log.warning("%d zero eigenvalue(s): substituting sentinel modulus", zero.sum())
    safe = np.where(zero, 1.0, lambdas)
    omegas = np.log(safe) / h
    omegas = np.where(zero, zero_sentinel, omegas)
    moduli = np.where(zero, zero_sentinel, np.abs(omegas)).astype(float)
    return ContinuousSpectrum(omegas=omegas, moduli=moduli, h=h)


def recover_modes(
    Y: np.ndarray, svd: ReducedSVD, eig: EigenSystem, x_first: np.ndarray
) -> ModeSet:
    """Lift eigenvectors to full dimension: Phi = Y V inv(Sigma) Q.

    ``Y`` is the uncompressed second data matrix, so the columns of Phi live
    in pixel space even though the eigenvectors come from the sketched
    operator.  Amplitudes solve min ||Phi c - x_first||_2 by least squares
    (Phi is tall, so a plain inverse does not exist); rank-deficiency is
    handled by the pseudo-inverse path of lstsq and a condition number above
    CONDITION_LIMIT is flagged.
    """
    Y = np.atleast_2d(np.asarray(Y))
    if Y.shape[1] != svd.V.shape[0]:
        raise ShapeError(
            f"Y has {Y.shape[1]} columns, factorization expects {svd.V.shape[0]}"
        )
    sig_inv = np.where(
        svd.sigma > SIGMA_RTOL * svd.sigma[0], 1.0 / svd.sigma, 0.0
    )
    Phi = Y @ (svd.V * sig_inv) @ eig.Q
    x_first = np.asarray(x_first).reshape(-1)
    if x_first.size != Phi.shape[0]:
        raise ShapeError("first snapshot length does not match mode dimension")
    sv = np.linalg.svd(Phi, compute_uv=False)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if condition > CONDITION_LIMIT:
        log.warning("mode matrix condition %.3e exceeds %.0e", condition, CONDITION_LIMIT)
    amplitudes, *_ = np.linalg.lstsq(Phi, x_first.astype(complex), rcond=None)
    return ModeSet(Phi=Phi, amplitudes=amplitudes, condition=condition)


def reduced_dmd(Xp: np.ndarray, Yp: np.ndarray, r: int) -> ReducedDMD:
    """Compressed decomposition of one window with effective-rank handling.

    The factorization is truncated to q = min(r, effective rank) before the
    operator is built, so rank-collapsed windows (static or all-zero data)
    yield exact results on the directions that exist; the remaining r - q
    eigenvalues are reported as 1 (static behavior).  A fully degenerate
    window (q = 0) is flagged instead of raising.
    """
    Xp = np.atleast_2d(np.asarray(Xp))
    Yp = np.atleast_2d(np.asarray(Yp))
    if not 1 <= r <= min(Xp.shape):
        raise ParameterError(f"rank {r} outside [1, {min(Xp.shape)}]")
    svd = reduced_svd(Xp, r)
    q = min(effective_rank_of(svd.sigma), r)
    if q == 0:
        return ReducedDMD(
            lambdas=np.ones(r, dtype=complex),
            effective_rank=0,
            degenerate=True,
            svd=None,
            operator=None,
            eig=None,
        )
    svd_q = truncate_svd(svd, q)
    op = build_reduced_operator(svd_q, Yp)
    eig = eigendecompose(op)
    lambdas = np.concatenate([eig.lambdas, np.ones(r - q, dtype=complex)])
    lambdas = lambdas[canonical_order(lambdas)]
    return ReducedDMD(
        lambdas=lambdas,
        effective_rank=q,
        degenerate=q < r,
        svd=svd_q,
        operator=op,
        eig=eig,
    )
