"""Bounding-ellipsoid approximation of the version space of homogeneous
linear classifiers, and spectral query synthesis.

The version space for labeled unit vectors ``(x_i, y_i)`` is
``V = {w : ||w|| <= 1, y_i <w, x_i> >= 0}``. Each constraint is the
halfspace ``a^T w <= 0`` with ``a = -y x``; deep cuts keep an ellipsoid
``{w : (w - mu)^T Sigma^{-1} (w - mu) <= 1}`` that always contains ``V``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError, RequiresWarmupError, UntruthfulDSError

log = logging.getLogger(__name__)

# cuts with depth alpha <= -1/d + NOOP_SLACK leave the ellipsoid unchanged
NOOP_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{w : (w - mu)^T Sigma^{-1} (w - mu) <= 1}``.

    A square-root factor ``L`` with ``Sigma = L L^T`` is kept alongside
    ``sigma``; cuts update the factor, which stays accurate long after
    ``sigma`` itself becomes too ill-conditioned to downdate.
    """

    mu: np.ndarray
    sigma: Optional[np.ndarray] = None
    factor: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        d = mu.size
        if self.factor is not None:
            L = np.asarray(self.factor, dtype=float)
            if L.shape != (d, d):
                raise DomainError("factor must be d x d")
            sigma = L @ L.T
        elif self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != (d, d):
                raise DomainError("shape matrix must be d x d")
            lam, V = np.linalg.eigh(0.5 * (sigma + sigma.T))
            L = V * np.sqrt(np.clip(lam, 0.0, None))
        else:
            raise DomainError("need a shape matrix or a factor")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "factor", L)

    @classmethod
    def unit_ball(cls, d):
        return cls(np.zeros(d), factor=np.eye(d))

    @property
    def d(self):
        return self.mu.size

    def validate(self):
        if not np.allclose(self.sigma, self.sigma.T, rtol=0, atol=1e-12):
            raise DomainError("shape matrix is not symmetric")
        if np.linalg.svd(self.factor, compute_uv=False).min() <= 0:
            raise DomainError("shape matrix is not positive definite")
        return self

    def quad(self, W):
        """``(w - mu)^T Sigma^{-1} (w - mu)`` for each row of ``W``."""
        D = np.atleast_2d(W) - self.mu
        Z = np.linalg.solve(self.factor, D.T)
        return np.einsum("ij,ij->j", Z, Z)

    def contains(self, W, slack=1e-9):
        return self.quad(W) <= 1.0 + slack

    def log_sqrt_det(self):
        sign, logdet = np.linalg.slogdet(self.factor)
        return logdet if sign != 0 else -math.inf

    def sqrt_det(self):
        return math.exp(self.log_sqrt_det())

    def dump(self) -> dict:
        return {"center": self.mu.tolist(), "eigenvalues": np.linalg.eigvalsh(self.sigma).tolist()}


# a constraint repeating the previous one within this tolerance is redundant
REPEAT_TOL = 1e-12


@dataclass
class LabeledSet:
    """Constraints ``(x, y)`` with ``x`` normalized to unit length, in insertion order.

    A constraint equal (within ``REPEAT_TOL``) to the one just before it, with
    the same label, is flagged as a repeat. Right after a cut by a halfspace
    the same halfspace has depth exactly ``-1/d``, so a repeat can never cut;
    the estimator skips repeats rather than re-testing them in floating point.
    Positive multiples of a query (ray-anchor samples) are the typical case.
    """

    d: int
    xs: List[np.ndarray] = field(default_factory=list)
    ys: List[int] = field(default_factory=list)
    repeats: List[bool] = field(default_factory=list)

    def add(self, x, y):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.d:
            raise DomainError(f"constraint has dimension {x.size}, expected {self.d}")
        n = np.linalg.norm(x)
        if n == 0:
            raise DomainError("cannot normalize the zero vector")
        if y not in (-1, 1):
            raise DomainError("labels must be -1 or +1")
        x = x / n
        rep = bool(self.xs) and self.ys[-1] == y and float(np.max(np.abs(self.xs[-1] - x))) <= REPEAT_TOL
        self.xs.append(x)
        self.ys.append(int(y))
        self.repeats.append(rep)

    def extend(self, X, y):
        for x in np.atleast_2d(X):
            self.add(x, y)

    def __len__(self):
        return len(self.xs)

    def cut_normals(self, skip_repeats=False):
        """Rows ``a_i = -y_i x_i``; constraint ``i`` is ``a_i^T w <= 0``."""
        if not self.xs:
            return np.empty((0, self.d))
        A = -np.asarray(self.ys, dtype=float)[:, None] * np.stack(self.xs)
        if skip_repeats:
            A = A[~np.asarray(self.repeats, dtype=bool)]
        return A

    def consistent(self, W):
        """Mask of rows of ``W`` lying in the version space."""
        W = np.atleast_2d(W)
        inside = np.linalg.norm(W, axis=1) <= 1.0
        if self.xs:
            inside &= np.all(self.cut_normals() @ W.T <= 0.0, axis=0)
        return inside


def _cut_coefficients(alpha, d):
    """Center step, scale, and factor shrink ``k'`` with ``(1 - k')^2 = 1 - k``."""
    step = (1 + d * alpha) / (d + 1)
    scale = d * d * (1 - alpha * alpha) / (d * d - 1)
    k = 2 * (1 + d * alpha) / ((d + 1) * (1 + alpha))
    return step, scale, 1.0 - math.sqrt(1.0 - k)


def cut_update(e: Ellipsoid, x, y, slack: float = NOOP_SLACK) -> Ellipsoid:
    """Deep cut of ``e`` by the halfspace ``y <w, x> >= 0``.

    With ``a = -y x``, ``g = sqrt(a^T Sigma a)`` and ``alpha = a^T mu / g``:
    ``mu' = mu - (1 + d alpha)/(d + 1) Sigma a / g`` and
    ``Sigma' = d^2 (1 - alpha^2)/(d^2 - 1) (Sigma - k Sigma a a^T Sigma / g^2)``
    with ``k = 2 (1 + d alpha) / ((d + 1)(1 + alpha))``, applied to the factor.
    """
    d = e.d
    if d < 2:
        raise DomainError("deep cuts need d >= 2")
    a = -float(y) * np.asarray(x, dtype=float)
    if not np.any(a):
        raise DomainError("cut normal must be non-zero")
    L = e.factor
    pr = L.T @ a
    g = float(np.linalg.norm(pr))
    if g == 0:
        return e
    alpha = float(a @ e.mu) / g
    if alpha <= -1.0 / d + slack:
        return e
    if alpha >= 1.0:
        raise UntruthfulDSError("labels are inconsistent: the cut removes the whole ellipsoid")
    step, scale, kk = _cut_coefficients(alpha, d)
    p = pr / g
    Lp = L @ p
    mu = e.mu - step * Lp
    L = math.sqrt(scale) * (L - kk * np.outer(Lp, p))
    return Ellipsoid(mu, factor=L)


def _sweep(A, mu, L, slack, block=256):
    """One insertion-order pass of deep cuts; returns (mu, L, log sqrt det change).

    Rows are scanned in blocks: ``A L`` and ``A mu`` are formed fresh for each
    block from the current ellipsoid, and a cut only updates the rest of its
    own block, so a cut costs ``O(block * d)`` however many rows there are.
    """
    n, d = A.shape
    thr = -1.0 / d + slack
    dlog = 0.0
    for b0 in range(0, n, block):
        Ab = A[b0 : b0 + block]
        P = Ab @ L
        am = Ab @ mu
        pos = 0
        m = len(Ab)
        while pos < m:
            g = np.sqrt(np.einsum("ij,ij->i", P[pos:], P[pos:]))
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = am[pos:] / g
            over = alpha > thr  # NaN (g = 0) compares False
            i = int(over.argmax())
            if not over[i]:
                break
            j = pos + i
            al = float(alpha[i])
            if al >= 1.0:
                raise UntruthfulDSError(f"constraint {b0 + j} is inconsistent with the others")
            p = P[j] / g[i]
            step, scale, kk = _cut_coefficients(al, d)
            Lp = L @ p
            mu = mu - step * Lp
            c = math.sqrt(scale)
            L = c * (L - kk * Lp[:, None] * p)
            pos = j + 1
            P = P[pos:]
            Pp = P @ p
            am = am[pos:] - step * Pp
            P = c * (P - kk * Pp[:, None] * p)
            m -= pos
            pos = 0
            dlog += 0.5 * d * math.log(scale) + math.log1p(-kk)
    return mu, L, dlog


def _deepest_first(A, mu, L, slack, rtol, max_cuts):
    """Repeatedly apply the deepest violated cut (largest ``alpha``).

    ``A L`` and ``A mu`` are kept up to date with rank-one corrections, so a
    cut costs ``O(n d)``. Stops when no cut has ``alpha`` above the no-op
    threshold or the deepest one shrinks ``sqrt(det Sigma)`` by less than a
    factor ``1 - rtol``.
    """
    n, d = A.shape
    thr = -1.0 / d + slack
    P = A @ L
    am = A @ mu
    for _ in range(max_cuts):
        g = np.sqrt(np.einsum("ij,ij->i", P, P))
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(g > 0, am / g, -np.inf)
        j = int(alpha.argmax())
        al = float(alpha[j])
        if al <= thr:
            break
        if al >= 1.0:
            raise UntruthfulDSError(f"constraint {j} is inconsistent with the others")
        step, scale, kk = _cut_coefficients(al, d)
        if 0.5 * d * math.log(scale) + math.log1p(-kk) > -rtol:
            break
        p = P[j] / g[j]
        Lp = L @ p
        mu = mu - step * Lp
        c = math.sqrt(scale)
        L = c * (L - kk * np.outer(Lp, p))
        Pp = P @ p
        am = am - step * Pp
        P = c * (P - kk * np.outer(Pp, p))
    return mu, L


ORDERS = ("insertion", "deepest")


def estimate_ellipsoid(
    q: LabeledSet,
    d: Optional[int] = None,
    start: Optional[Ellipsoid] = None,
    max_sweeps: int = 50,
    rtol: float = 1e-6,
    slack: float = NOOP_SLACK,
    order: str = "insertion",
) -> Ellipsoid:
    """Bounding ellipsoid of the version space of ``q``.

    Starts from the unit ball (or from ``start``, which must already contain
    the version space) and applies deep cuts until they stop paying off.
    ``order="insertion"`` sweeps the constraints in insertion order until a
    full sweep shrinks ``sqrt(det Sigma)`` by less than a factor
    ``1 - rtol``; ``order="deepest"`` always cuts with the most violated
    constraint (at most ``max_sweeps * n`` cuts), which makes better use of
    many near-duplicate constraints such as box-anchor samples.
    """
    d = q.d if d is None else d
    if d != q.d:
        raise DomainError("dimension mismatch between constraint set and d")
    if order not in ORDERS:
        raise DomainError(f"unknown cut order {order!r}")
    e = Ellipsoid.unit_ball(d) if start is None else start
    if len(q) == 0:
        return e
    A = q.cut_normals(skip_repeats=True)
    mu, L = e.mu.copy(), e.factor.copy()
    if order == "deepest":
        mu, L = _deepest_first(A, mu, L, slack, rtol, max_sweeps * len(A))
        return Ellipsoid(mu, factor=L)
    for _ in range(max_sweeps):
        mu, L, dlog = _sweep(A, mu, L, slack)
        if math.exp(dlog) > 1.0 - rtol:
            break
    return Ellipsoid(mu, factor=L)


def complement_basis(mu):
    """Orthonormal basis (as columns) of the orthogonal complement of ``mu``.

    Gram-Schmidt with re-orthogonalization, completing ``mu/||mu||`` with the
    standard basis vectors taken in order of increasing ``|mu_i|``.
    """
    mu = np.asarray(mu, dtype=float)
    d = mu.size
    basis = [mu / np.linalg.norm(mu)]
    for i in np.argsort(np.abs(mu), kind="stable"):
        v = np.zeros(d)
        v[i] = 1.0
        for _ in range(2):
            for b in basis:
                v = v - (b @ v) * b
        n = np.linalg.norm(v)
        if n > 1e-8:
            basis.append(v / n)
        if len(basis) == d:
            break
    return np.column_stack(basis[1:])


def power_iteration(M, seed=0, tol=1e-10, max_squarings=64):
    """Top eigenvector of a symmetric positive semi-definite matrix.

    Power method on repeated squares: after ``k`` steps the start vector has
    been multiplied by ``M^(2^k)``, so tiny eigen-gaps (common right after a
    few cuts of the unit ball) still converge in a few dozen products. Stops
    when successive iterates differ by less than ``tol``.
    """
    M = np.asarray(M, dtype=float)
    k = M.shape[0]
    if k == 1:
        return np.ones(1)
    v0 = np.random.default_rng(seed).standard_normal(k)
    v0 /= np.linalg.norm(v0)
    A = M
    v = v0
    for _ in range(max_squarings):
        nA = np.linalg.norm(A)
        if nA == 0:
            return v
        A = A / nA
        w = A @ v0
        nw = np.linalg.norm(w)
        if nw == 0:
            return v
        w /= nw
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
        A = A @ A
    log.debug("power iteration did not settle after %d squarings", max_squarings)
    return v


def synthesize_query(e: Ellipsoid, seed=0, tol=1e-10) -> np.ndarray:
    """Unit query orthogonal to the center along the widest remaining direction."""
    nmu = np.linalg.norm(e.mu)
    if nmu == 0:
        raise RequiresWarmupError("ellipsoid center is zero; supply warm-up points first")
    N = complement_basis(e.mu)
    B = N.T @ e.factor
    M = B @ B.T
    alpha = power_iteration(M, seed=seed, tol=tol)
    q = N @ alpha
    q /= np.linalg.norm(q)
    if q[np.argmax(np.abs(q))] < 0:
        q = -q
    return q
