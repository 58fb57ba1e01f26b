"""Eigen-structure of the pencils E^-1 A and (A - mu B).

For an invertible viscosity matrix the layer decay data comes from
B^-1 A directly.  For a singular B the pencil det(A - mu B) is degenerate;
the well-posed object is the reduced matrix bbar^-1 abar obtained from
the explicit form of the steady/traveling-wave system, and eigenvectors
are lifted back to R^N through the exchange formula.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, UnsupportedCaseError
from .systems import (
    RANK_RTOL,
    fix_sign,
    kernel_basis,
    numerical_rank,
    sym_pencil_eig,
)

ZERO_EIG_RTOL = 1e-9  # |lambda| below this times the spectral scale is "zero"


@dataclass
class EigenData:
    values: np.ndarray
    vectors: np.ndarray  # columns, matched to values
    n: int               # strictly negative count
    k_minus_1: int       # count of values <= -near_zero_tol
    has_near_zero: bool
    near_zero_value: float | None
    gap: float

    @property
    def n_positive(self):
        return int(np.count_nonzero(
            self.values > ZERO_EIG_RTOL * max(1.0, np.abs(self.values).max())
        ))


@dataclass
class ReducedBlocks:
    a11: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    projections: dict
    q: int
    sigma: float


@dataclass
class SubspaceTriple:
    Vs: np.ndarray
    Vc: np.ndarray
    Vu: np.ndarray
    theta_vectors: list = field(default_factory=list)  # (mu, Theta)
    xi_vectors: list = field(default_factory=list)     # (lambda, Xi)


def eig_pencil(spec, u, which="EA", near_zero_tol=None) -> EigenData:
    """Eigen-decomposition of E^-1 A(u,0) or B^-1 A(u,0) with counts."""
    u = spec.require_in_ball(u)
    A = spec.A0(u)
    if which == "EA":
        M = spec.E(u)
    elif which == "BA":
        if spec.singular:
            raise InvalidInputError("B^-1 A needs an invertible viscosity matrix")
        M = spec.B(u)
    else:
        raise InvalidInputError("which must be 'EA' or 'BA'")
    if np.abs(A - A.T).max() > 1e-9 * max(1.0, np.abs(A).max()):
        wc, Vc = sla.eig(np.linalg.solve(M, A))
        scale = max(1.0, np.abs(wc).max())
        if np.abs(wc.imag).max() > 1e-9 * scale:
            raise UnsupportedCaseError(
                f"non-real spectrum of {which} pencil (max imag "
                f"{np.abs(wc.imag).max():.2e})"
            )
        order = np.argsort(wc.real)
        w = wc.real[order]
        V = Vc.real[:, order]
        V = V / np.linalg.norm(V, axis=0, keepdims=True)
        for j in range(V.shape[1]):
            V[:, j] = fix_sign(V[:, j])
    else:
        w, V = sym_pencil_eig(A, M)
    scale = max(1.0, np.abs(w).max())
    if near_zero_tol is None:
        near_zero_tol = ZERO_EIG_RTOL * scale
    gap = np.inf if spec.N == 1 else float(np.diff(w).min())
    j_near = int(np.argmin(np.abs(w)))
    has_near_zero = bool(np.abs(w[j_near]) <= near_zero_tol)
    return EigenData(
        values=w, vectors=V,
        n=int(np.count_nonzero(w < -ZERO_EIG_RTOL * scale)),
        k_minus_1=int(np.count_nonzero(w < -near_zero_tol)),
        has_near_zero=has_near_zero,
        near_zero_value=float(w[j_near]) if has_near_zero else None,
        gap=gap,
    )


def verify_count_invariance(spec, u):
    """Negative/positive eigenvalue counts of B^-1 A and E^-1 A agree."""
    from .systems import HypothesisReport

    ea = eig_pencil(spec, u, "EA")
    ba = eig_pencil(spec, u, "BA")
    counts = {"n_EA": ea.n, "n_BA": ba.n,
              "p_EA": ea.n_positive, "p_BA": ba.n_positive}
    passed = ea.n == ba.n and ea.n_positive == ba.n_positive
    return HypothesisReport(
        name="count_invariance", passed=passed,
        witnesses=[] if passed else [(np.asarray(u, float), counts)],
        constants=counts if passed else {},
    )


def _split_blocks(spec, u, sigma):
    nr = spec.N - spec.r
    Asig = spec.A0(u) - sigma * spec.E(u)
    return nr, Asig, spec.B(u)


def reduce_singular(spec, u, sigma) -> ReducedBlocks:
    """Block reduction of the degenerate pencil at (u, sigma).

    Splits w along ker(A11 - sigma E11) and its complement, selects q
    independent rows of A^I_21 by column-pivoted QR (fixed deterministic
    ordering), and assembles the reduced matrices abar, bbar of size
    (r-q) whose pencil carries the non-trivial generalized eigenvalues.
    """
    if not spec.singular:
        raise InvalidInputError("reduction applies to singular viscosity only")
    u = spec.require_in_ball(u)
    nr, Asig, B = _split_blocks(spec, u, sigma)
    A11s = Asig[:nr, :nr]
    P0 = kernel_basis(A11s).T                      # q x (N-r)
    q = P0.shape[0]
    if q:
        Pp = sla.null_space(P0).T                  # (N-r-q) x (N-r)
    else:
        Pp = np.eye(nr)
    A21s = Asig[nr:, :nr]
    AI21 = A21s @ P0.T                             # r x q
    if numerical_rank(AI21) < q:
        raise UnsupportedCaseError(
            "A^I_21 is rank deficient: Kawashima condition violated at this state"
        )
    AII21 = A21s @ Pp.T                            # r x (N-r-q)
    At11 = Pp @ A11s @ Pp.T                        # (N-r-q) square

    if q:
        # greedy pivoted row selection; by continuity the same rows work
        # on the whole neighborhood
        _, _, piv = sla.qr(AI21.T, pivoting=True)
        rows = np.sort(piv[:q])
        others = np.setdiff1d(np.arange(spec.r), rows)
        Pbar = np.eye(spec.r)[rows, :]             # q x r
        Ptil = np.eye(spec.r)[others, :]           # (r-q) x r
    else:
        Pbar = np.zeros((0, spec.r))
        Ptil = np.eye(spec.r)

    a11 = Pbar @ AI21                              # q x q
    a12 = Pbar @ AII21                             # q x (N-r-q)
    a21 = Ptil @ AI21                              # (r-q) x q
    a22 = Ptil @ AII21                             # (r-q) x (N-r-q)
    alpha = Asig[nr:, nr:]
    al11 = Pbar @ alpha @ Pbar.T
    al21 = Ptil @ alpha @ Pbar.T
    al22 = Ptil @ alpha @ Ptil.T
    b = B[nr:, nr:]
    b11 = Pbar @ b @ Pbar.T
    b12 = Pbar @ b @ Ptil.T
    b21 = Ptil @ b @ Pbar.T
    b22 = Ptil @ b @ Ptil.T

    if q:
        a11i = np.linalg.inv(a11)
        a11Ti = a11i.T
        inner = al11 @ a11Ti @ a21.T - al21.T
        if nr - q:
            inner = inner + a12 @ np.linalg.solve(
                At11, a22.T - a12.T @ a11Ti @ a21.T
            )
        a_bar = a21 @ a11i @ inner - al21 @ a11Ti @ a21.T + al22
        if nr - q:
            a_bar = a_bar + a22 @ np.linalg.solve(
                At11, a12.T @ a11Ti @ a21.T - a22.T
            )
        b_bar = (a21 @ a11i @ (b11 @ a11Ti @ a21.T - b12)
                 - b21 @ a11Ti @ a21.T + b22)
    else:
        a_bar = al22 - a22 @ np.linalg.solve(At11, a22.T)
        b_bar = b22

    if b_bar.size:
        sv = np.linalg.svd(b_bar, compute_uv=False)
        if sv[-1] <= RANK_RTOL * max(sv[0], 1e-300):
            raise UnsupportedCaseError(
                "reduced viscosity block bbar is singular (internal "
                "inconsistency: positivity of b should prevent this)"
            )
    if q:
        sva = np.linalg.svd(a11, compute_uv=False)
        if sva[-1] <= RANK_RTOL * max(sva[0], 1e-300):
            raise UnsupportedCaseError("selected a11 block is singular")
    return ReducedBlocks(
        a11=a11, a_bar=a_bar, b_bar=b_bar,
        projections={"P0": P0, "Pperp": Pp, "Pbar": Pbar, "Ptil": Ptil,
                     "At11": At11, "a12": a12, "a21": a21, "a22": a22,
                     "al11": al11, "al21": al21, "al22": al22,
                     "b11": b11, "b12": b12, "b21": b21, "b22": b22},
        q=q, sigma=sigma,
    )


def _lift_xi(spec, red, xi, mu):
    """Lift a reduced eigenvector xi of bbar^-1 abar back to R^N.

    Solves the first three block lines of (A - sigma E - mu B) Xi = 0 for
    (wbar, wtilde, zbar) given ztilde = xi; the fourth line is the reduced
    eigenvalue equation itself.
    """
    nr = spec.N - spec.r
    P = red.projections
    q = red.q
    xi = np.asarray(xi, dtype=float)
    if nr - q:
        rhs = -P["a22"].T @ xi
        if q:
            rhs = rhs + P["a12"].T @ np.linalg.inv(red.a11).T @ P["a21"].T @ xi
        wt = np.linalg.solve(P["At11"], rhs)
    else:
        wt = np.zeros(0)
    if q:
        a11i = np.linalg.inv(red.a11)
        a11Ti = a11i.T
        zb = -a11Ti @ P["a21"].T @ xi
        wb = a11i @ (P["al11"] @ a11Ti @ P["a21"].T - P["al21"].T) @ xi
        if nr - q:
            wb = wb + a11i @ P["a12"] @ np.linalg.solve(
                P["At11"], (P["a22"].T - P["a12"].T @ a11Ti @ P["a21"].T) @ xi
            )
        wb = wb + (a11i @ P["b12"]
                   - a11i @ P["b11"] @ a11Ti @ P["a21"].T) @ (mu * xi)
    else:
        zb = np.zeros(0)
        wb = np.zeros(0)
    w = np.zeros(nr)
    if q:
        w += P["P0"].T @ wb
    if nr - q:
        w += P["Pperp"].T @ wt
    z = P["Ptil"].T @ xi
    if q:
        z = z + P["Pbar"].T @ zb
    return np.concatenate([w, z])


def generalized_eigs(spec, u, sigma=0.0):
    """Eigenvalues mu with (A - sigma E - mu B) Theta = 0, Theta lifted.

    Computed from bbar^-1 abar; for invertible B this degenerates to the
    eigen-decomposition of B^-1 (A - sigma E).
    """
    u = spec.require_in_ball(u)
    if not spec.singular:
        A = spec.A0(u) - sigma * spec.E(u)
        w, V = sym_pencil_eig(A, spec.B(u))
        return [(float(w[j]), V[:, j]) for j in range(spec.N)]
    red = reduce_singular(spec, u, sigma)
    m = red.a_bar.shape[0]
    if m == 0:
        return []
    wc, Vc = sla.eig(np.linalg.solve(red.b_bar, red.a_bar))
    if np.abs(wc.imag).max() > 1e-9 * max(1.0, np.abs(wc).max()):
        raise UnsupportedCaseError("reduced pencil has non-real eigenvalues")
    if numerical_rank(Vc.real) < m:
        raise UnsupportedCaseError(
            "bbar^-1 abar is defective; generalized eigenvector chains are "
            "not implemented"
        )
    order = np.argsort(wc.real)
    A0 = spec.A0(u) - sigma * spec.E(u)
    B = spec.B(u)
    normA = np.linalg.norm(A0, 2)
    out = []
    for j in order:
        mu = float(wc.real[j])
        Theta = _lift_xi(spec, red, Vc.real[:, j], mu)
        Theta = fix_sign(Theta / np.linalg.norm(Theta))
        resid = np.linalg.norm((A0 - mu * B) @ Theta)
        if resid > 1e-8 * max(1.0, normA) * np.linalg.norm(Theta):
            raise UnsupportedCaseError(
                f"lifted eigenvector residual {resid:.2e} too large at mu={mu}"
            )
        out.append((mu, Theta))
    return out


def stable_dimension(spec, u):
    """Number of decaying layer directions at u (sigma = 0).

    Counts generalized eigenvalues with negative real part and checks the
    result against the independent bookkeeping k-1-n11-q (with k-1 read
    as n when A(u,0) is nonsingular).
    """
    u = spec.require_in_ball(u)
    ea = eig_pencil(spec, u)
    if not spec.singular:
        return ea.n
    pairs = generalized_eigs(spec, u, 0.0)
    scale = max(1.0, max(abs(mu) for mu, _ in pairs)) if pairs else 1.0
    d = sum(1 for mu, _ in pairs if mu < -ZERO_EIG_RTOL * scale)
    nr = spec.N - spec.r
    A11 = spec.A0(u)[:nr, :nr]
    E11 = spec.E(u)[:nr, :nr]
    w11, _ = sym_pencil_eig(A11, E11)
    s11 = max(1.0, np.abs(w11).max())
    n11 = int(np.count_nonzero(w11 < -ZERO_EIG_RTOL * s11))
    q = int(np.count_nonzero(np.abs(w11) <= ZERO_EIG_RTOL * s11))
    k_minus_1 = ea.k_minus_1 if ea.has_near_zero else ea.n
    expected = k_minus_1 - n11 - q
    if d != expected:
        raise UnsupportedCaseError(
            f"stable dimension mismatch: counted {d} negative generalized "
            f"eigenvalues but k-1-n11-q = {expected}; an upstream hypothesis "
            "is violated"
        )
    return d


def transversal_subspaces(spec, u) -> SubspaceTriple:
    """Stable/center/unstable directions with the full-rank check.

    Vs holds the decaying layer directions (chi for invertible B, lifted
    Theta for singular B), Vc the near-zero eigenvector of E^-1 A, Vu the
    outgoing eigenvectors.  The concatenation must have full column rank.
    """
    u = spec.require_in_ball(u)
    ea = eig_pencil(spec, u)
    scale = max(1.0, np.abs(ea.values).max())
    pos = ea.values > ZERO_EIG_RTOL * scale
    near = np.abs(ea.values) <= ZERO_EIG_RTOL * scale
    Vu = ea.vectors[:, pos] if pos.any() else np.zeros((spec.N, 0))
    Vc = ea.vectors[:, near] if near.any() else np.zeros((spec.N, 0))
    xi_vectors = [(float(ea.values[j]), ea.vectors[:, j])
                  for j in range(spec.N) if pos[j] or near[j]]
    pairs = generalized_eigs(spec, u, 0.0)
    mscale = max(1.0, max((abs(mu) for mu, _ in pairs), default=1.0))
    theta_vectors = [(mu, Th) for mu, Th in pairs
                     if mu < -ZERO_EIG_RTOL * mscale]
    Vs = (np.column_stack([Th for _, Th in theta_vectors])
          if theta_vectors else np.zeros((spec.N, 0)))
    M = np.column_stack([Vs, Vc, Vu])
    if M.shape[1]:
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise UnsupportedCaseError(
                f"transversal subspaces are rank deficient "
                f"(smallest singular value ratio {sv[-1]/sv[0]:.2e})"
            )
    return SubspaceTriple(Vs=Vs, Vc=Vc, Vu=Vu,
                          theta_vectors=theta_vectors, xi_vectors=xi_vectors)
