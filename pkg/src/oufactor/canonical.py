"""Identifiable canonical form and interpretation transforms.

The observable law of the model is unchanged by an invertible change of
factor basis x -> A x, which maps the parameter triple as

    theta -> A theta A^-1,  loadings -> loadings A^-1,  sigma -> A sigma A^T.

`canonicalize` picks the unique representative (up to factor sign flips)
with identity diffusion, antisymmetric off-diagonal part and decreasing
diagonal; `sign_normalize` fixes the sign flips. `block_diagonalize` moves
to the opposite extreme: a basis in which the mean-reversion matrix is
block diagonal with one 1x1 block per real eigenvalue and one 2x2 rotation
block per complex pair, which is the form that reads off decay rates and
oscillation frequencies. `theta_distance` and `exp_error_ratio` compare
canonical mean-reversion matrices modulo the residual gauge freedom.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from .errors import DegenerateSpectrumError, NumericalError
from .params import ModelParams
from .process import _check_sigma, _check_theta

#: Relative eigenvalue-gap threshold below which bases are flagged/rejected.
GAP_TOL = 1e-8


@dataclass
class CanonicalTransform:
    """Result of `canonicalize`.

    Attributes
    ----------
    transform : (m, m) array
        The basis change A with A sigma A^T = I and
        A theta A^-1 = canonical theta.
    theta : (m, m) array
        Canonical mean-reversion matrix: exactly antisymmetric off the
        diagonal, diagonal equal to half the decreasing eigenvalues of
        phi + phi^T.
    phi : (m, m) array
        The whitened matrix sigma^(-1/2) theta sigma^(1/2).
    sym_eigs : (m,) array
        Eigenvalues of phi + phi^T in decreasing order (twice the canonical
        diagonal).
    degenerate : bool
        True when two of those eigenvalues are within GAP_TOL (relative);
        the rotation part of the transform is then ill-determined and the
        canonical form is not unique beyond sign flips.
    """

    transform: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    sym_eigs: np.ndarray
    degenerate: bool


def canonicalize(theta, sigma=None) -> CanonicalTransform:
    """Compute the identifiable canonical representative of (theta, sigma).

    Whitens the diffusion with the symmetric inverse square root of sigma,
    then rotates with the orthogonal eigenbasis of the symmetrized whitened
    matrix. The result is unique up to conjugation by a diagonal sign
    matrix whenever `degenerate` is False.
    """
    theta = _check_theta(theta)
    m = theta.shape[0]
    sigma = _check_sigma(sigma, m)
    w, v = np.linalg.eigh(sigma)
    if w[0] <= 1e-12 * max(1.0, w[-1]):
        raise ValueError(
            f"sigma is not positive definite (min eigenvalue {w[0]:.3e})"
        )
    inv_half = (v / np.sqrt(w)) @ v.T
    half = (v * np.sqrt(w)) @ v.T
    phi = inv_half @ theta @ half
    sym = phi + phi.T
    d_asc, b_cols = np.linalg.eigh((sym + sym.T) / 2.0)
    d = d_asc[::-1]
    b = b_cols[:, ::-1].T
    a = b @ inv_half
    raw = b @ phi @ b.T
    # Snap to the exact canonical structure; the adjustment is pure roundoff.
    theta_tilde = (raw - raw.T) / 2.0 + np.diag(d / 2.0)
    gaps = -np.diff(d)
    degenerate = bool(gaps.size and gaps.min() < GAP_TOL * max(1.0, abs(d[0])))
    if degenerate:
        warnings.warn(
            "nearly repeated eigenvalues in the symmetrized whitened matrix; "
            "the canonical rotation is ill-determined",
            RuntimeWarning,
            stacklevel=2,
        )
    return CanonicalTransform(
        transform=a, theta=theta_tilde, phi=phi, sym_eigs=d, degenerate=degenerate
    )


def sign_normalize(loadings, theta) -> tuple[np.ndarray, np.ndarray]:
    """Fix the residual sign gauge of a canonical parametrization.

    Flips factor signs so every entry of the first loadings row is
    non-negative (entries exactly zero are left unflipped). The flip
    conjugates theta by a diagonal sign matrix, which preserves canonical
    structure and the observable law.
    """
    loadings = np.array(loadings, dtype=float)
    theta = np.array(theta, dtype=float)
    if loadings.ndim != 2 or loadings.shape[1] != theta.shape[0]:
        raise ValueError(
            f"loadings shape {loadings.shape} does not match theta {theta.shape}"
        )
    signs = np.where(loadings[0] < 0, -1.0, 1.0)
    return loadings * signs, theta * np.outer(signs, signs)


def apply_basis_change(params: ModelParams, a) -> ModelParams:
    """Apply the factor basis change x -> A x to a parameter set.

    Returns a model with the same observable law: theta -> A theta A^-1,
    loadings -> loadings A^-1, diffusion -> A diffusion A^T.
    """
    a = np.asarray(a, dtype=float)
    m = params.m
    if a.shape != (m, m):
        raise ValueError(f"transform must have shape {(m, m)}, got {a.shape}")
    try:
        a_inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("transform must be invertible") from exc
    sigma = params.diffusion_matrix()
    return replace(
        params,
        theta=a @ params.theta @ a_inv,
        loadings=params.loadings @ a_inv,
        obs_mean=params.obs_mean.copy(),
        noise_var=params.noise_var.copy(),
        diffusion=a @ sigma @ a.T,
    )


def to_canonical(params: ModelParams) -> tuple[ModelParams, np.ndarray]:
    """Map a parameter set to its sign-normalized canonical representative.

    Returns the canonical model (diffusion None, meaning exactly identity)
    and the total transform applied, so that the result equals
    `apply_basis_change(params, transform)` up to setting the diffusion to
    the identity it approximates.
    """
    ct = canonicalize(params.theta, params.diffusion)
    pre = np.linalg.solve(ct.transform.T, params.loadings.T).T
    z, theta = sign_normalize(pre, ct.theta)
    signs = np.where(pre[0] < 0, -1.0, 1.0)
    total = ct.transform * signs[:, None]
    out = ModelParams(
        theta=theta,
        loadings=z,
        obs_mean=params.obs_mean.copy(),
        noise_var=params.noise_var.copy(),
        diffusion=None,
    )
    return out, total


@dataclass
class BlockForm:
    """Result of `block_diagonalize`.

    Attributes
    ----------
    transform : (m, m) array
        Invertible T with T theta T^-1 equal to the assembled block matrix
        (up to roundoff) and params the correspondingly transformed model.
    blocks : list of arrays
        One (1, 1) block per real eigenvalue and one (2, 2) block
        [[a, -b], [b, a]] per complex pair a +- i b (b > 0), ordered by
        decreasing real part.
    params : ModelParams
        The same model in the block basis: theta is the exact assembled
        block-diagonal matrix, loadings and diffusion are transformed to
        match.
    """

    transform: np.ndarray
    blocks: list[np.ndarray]
    params: ModelParams

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta


def block_diagonalize(params: ModelParams) -> BlockForm:
    """Change basis so the mean-reversion matrix is real block diagonal.

    Requires pairwise distinct eigenvalues (relative separation > GAP_TOL);
    near-defective matrices raise DegenerateSpectrumError. The block
    diagonal is assembled exactly from the eigenvalues, so each 2x2 block
    has exactly equal diagonal entries and antisymmetric off-diagonals.
    """
    theta = params.theta
    m = params.m
    eigvals, eigvecs = np.linalg.eig(theta)
    scale = max(1.0, np.abs(eigvals).max())
    for i in range(m):
        for j in range(i + 1, m):
            if abs(eigvals[i] - eigvals[j]) <= GAP_TOL * scale:
                raise DegenerateSpectrumError(
                    "eigenvalues "
                    f"{eigvals[i]:.6g} and {eigvals[j]:.6g} are too close for "
                    "a stable block decomposition"
                )
    imag_tol = 1e-12 * scale
    used = np.zeros(m, dtype=bool)
    pieces = []
    for i in range(m):
        if used[i]:
            continue
        lam = eigvals[i]
        x = eigvecs[:, i].astype(complex)
        if abs(lam.imag) <= imag_tol:
            used[i] = True
            k = int(np.argmax(np.abs(x)))
            x = x / x[k]
            v = x.real
            v = v / np.linalg.norm(v)
            pieces.append((lam.real, 0.0, v[:, None], np.array([[lam.real]])))
        elif lam.imag > 0:
            used[i] = True
            partner = None
            best = np.inf
            for j in range(m):
                if not used[j] and eigvals[j].imag < 0:
                    gap = abs(eigvals[j] - np.conj(lam))
                    if gap < best:
                        best = gap
                        partner = j
            if partner is None:
                raise NumericalError("unpaired complex eigenvalue")
            used[partner] = True
            k = int(np.argmax(np.abs(x)))
            x = x * (np.conj(x[k]) / np.abs(x[k]))
            x = x / np.linalg.norm(x)
            a_part, b_part = lam.real, lam.imag
            cols = np.column_stack([x.imag, x.real])
            block = np.array([[a_part, -b_part], [b_part, a_part]])
            pieces.append((a_part, b_part, cols, block))
    pieces.sort(key=lambda item: (-item[0], item[1]))
    basis = np.hstack([item[2] for item in pieces])
    blocks = [item[3] for item in pieces]
    cond = np.linalg.cond(basis)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(
            f"eigenvector basis is ill-conditioned (condition number {cond:.3e})"
        )
    transform = np.linalg.inv(basis)
    theta_block = np.zeros((m, m))
    pos = 0
    for blk in blocks:
        k = blk.shape[0]
        theta_block[pos : pos + k, pos : pos + k] = blk
        pos += k
    sigma = params.diffusion_matrix()
    out = replace(
        params,
        theta=theta_block,
        loadings=params.loadings @ basis,
        obs_mean=params.obs_mean.copy(),
        noise_var=params.noise_var.copy(),
        diffusion=transform @ sigma @ transform.T,
    )
    return BlockForm(transform=transform, blocks=blocks, params=out)


def _check_canonical_2x2(theta, name: str, tol: float = 1e-8) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2, got shape {theta.shape}")
    scale = max(1.0, np.abs(theta).max())
    if abs(theta[0, 1] + theta[1, 0]) > tol * scale:
        raise ValueError(f"{name} is not canonical: off-diagonal not antisymmetric")
    if theta[1, 1] - theta[0, 0] > tol * scale:
        raise ValueError(f"{name} is not canonical: diagonal not decreasing")
    return theta


def theta_distance(theta, theta_hat) -> float:
    """Frobenius distance between 2x2 canonical matrices modulo gauge.

    Minimizes ||theta - Q theta_hat Q^T||_F over all orthogonal Q. For the
    canonical family the minimum is attained at one of four candidates:
    identity or transpose of theta_hat, with the diagonal optionally
    swapped (the swapped candidates can only tie when the diagonals are
    ordered, but keeping them makes the function total on near-ties).
    """
    t = _check_canonical_2x2(theta, "theta")
    s = _check_canonical_2x2(theta_hat, "theta_hat")
    d_same = (t[0, 0] - s[0, 0]) ** 2 + (t[1, 1] - s[1, 1]) ** 2
    d_swap = (t[0, 0] - s[1, 1]) ** 2 + (t[1, 1] - s[0, 0]) ** 2
    off_minus = 2.0 * (t[0, 1] - s[0, 1]) ** 2
    off_plus = 2.0 * (t[0, 1] + s[0, 1]) ** 2
    best = min(
        d_same + off_minus, d_same + off_plus, d_swap + off_minus, d_swap + off_plus
    )
    return float(np.sqrt(best))


def exp_error_ratio(theta, theta_hat) -> float:
    """Relative Frobenius error of the one-unit transition matrix.

    Computes ||exp(-theta_hat) - exp(-theta)||_F / ||exp(-theta)||_F for
    canonical inputs. For 2x2 matrices whose off-diagonal signs disagree
    (opposite rotation direction, an artifact of the sign gauge),
    theta_hat is transposed first so equivalent estimates score zero. For
    other dimensions the plain ratio is returned.
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.shape != theta_hat.shape:
        raise ValueError(
            f"shape mismatch: {theta.shape} vs {theta_hat.shape}"
        )
    if theta.shape == (2, 2):
        _check_canonical_2x2(theta, "theta")
        _check_canonical_2x2(theta_hat, "theta_hat")
        if theta[0, 1] * theta_hat[0, 1] < 0:
            theta_hat = theta_hat.T
    ref = expm(-theta)
    err = expm(-theta_hat) - ref
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise NumericalError("reference transition matrix has zero norm")
    return float(np.linalg.norm(err) / denom)
