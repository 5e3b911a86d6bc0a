"""Bayesian segmentation: atlas prior + unsupervised GMM likelihood via EM.

The segmenter fits per-label Gaussian intensity parameters to the scan being
segmented, which is what makes it contrast agnostic, and optionally estimates
a smooth additive bias field in the log-intensity domain by weighted least
squares on a low-order polynomial basis.

The atlas is assumed spatially aligned with the image; no deformation is
fitted at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .intensity import GmmParams, gaussian_blur
from .volume import Dims, LabelMap, Volume

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative slack for the EM monotonicity invariant (floating point).
LL_SLACK = 1e-7


@dataclass(frozen=True)
class Atlas:
    """Per-voxel label probabilities: (K, nx, ny, nz) channels plus ordering."""

    probs: np.ndarray
    labels: tuple[int, ...]

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float32)
        if probs.ndim != 4:
            raise ValueError(f"atlas probs must be (K, nx, ny, nz), got {probs.shape}")
        if probs.shape[0] != len(self.labels):
            raise ValueError("atlas channel count does not match label ordering")
        if probs.min() < 0 or probs.max() > 1 + 1e-5:
            raise ValueError("atlas probabilities must lie in [0, 1]")
        sums = probs.sum(axis=0)
        if np.abs(sums - 1.0).max() > 1e-5:
            raise ValueError("atlas channels must sum to 1 at every voxel")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", tuple(int(k) for k in self.labels))

    @property
    def dims(self) -> Dims:
        return self.probs.shape[1:]  # type: ignore[return-value]

    @property
    def num_labels(self) -> int:
        return self.probs.shape[0]


def build_atlas(
    maps: Sequence[LabelMap], smoothing_sigma: float, floor: float = 1e-6
) -> Atlas:
    """Average of one-hot maps, channelwise blurred, floored and renormalized.

    The floor keeps every label's prior strictly positive so EM can recover
    from atlas disagreements.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("need at least one label map to build an atlas")
    dims = maps[0].dims
    for i, m in enumerate(maps):
        if m.dims != dims:
            raise ValueError(f"dim mismatch: map 0 has {dims}, map {i} has {m.dims}")
    ordering = sorted({k for m in maps for k in m.label_set})

    probs = np.zeros((len(ordering),) + dims, dtype=np.float32)
    for ci, k in enumerate(ordering):
        acc = np.zeros(dims, dtype=np.float32)
        for m in maps:
            acc += m.labels == k
        acc /= len(maps)
        if smoothing_sigma > 0:
            acc = gaussian_blur(Volume(acc), smoothing_sigma).data
        probs[ci] = acc
    probs += floor
    probs /= probs.sum(axis=0, keepdims=True)
    return Atlas(probs=probs, labels=tuple(ordering))


@dataclass(frozen=True)
class EmResult:
    map_labels: LabelMap
    posteriors: np.ndarray
    fitted: GmmParams
    ll_trace: tuple[float, ...]
    labels: tuple[int, ...]
    bias_log_coeffs: np.ndarray | None = None
    bias_log: Volume | None = None
    bias_singular: bool = False


def monomial_powers(order: int) -> list[tuple[int, int, int]]:
    return [
        (a, b, c)
        for total in range(order + 1)
        for a in range(total + 1)
        for b in range(total - a + 1)
        for c in (total - a - b,)
    ]


def polynomial_basis(dims: Dims, order: int) -> np.ndarray:
    """(J, P) monomials up to total degree `order` in centered, scaled coords."""
    if not 0 <= order <= 4:
        raise ValueError(f"bias order must be in 0..4, got {order}")
    axes = []
    for n in dims:
        half = (n - 1) / 2.0
        scale = half if half > 0 else 1.0
        axes.append((np.arange(n, dtype=np.float64) - half) / scale)
    powers = monomial_powers(order)
    cols = []
    for a, b, c in powers:
        term = (
            (axes[0] ** a)[:, None, None]
            * (axes[1] ** b)[None, :, None]
            * (axes[2] ** c)[None, None, :]
        )
        cols.append(term.ravel())
    return np.stack(cols, axis=1)


def _bias_residual(
    y: np.ndarray, w: np.ndarray, mu: np.ndarray, sig: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Precision-weighted residual and per-voxel precision for the bias fit."""
    inv_var = 1.0 / (sig * sig)
    weights = inv_var @ w
    resid = y - ((mu * inv_var) @ w) / np.maximum(weights, 1e-30)
    return resid, weights


def _weighted_poly_fit(
    basis: np.ndarray, resid: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, bool]:
    """WLS fit of resid on basis; returns (coeffs, fitted values, singular)."""
    gram = basis.T @ (basis * weights[:, None])
    rhs = basis.T @ (weights * resid)
    try:
        coeffs = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.zeros(basis.shape[1]), np.zeros(len(resid)), True
    if not np.isfinite(coeffs).all():
        return np.zeros(basis.shape[1]), np.zeros(len(resid)), True
    return coeffs, basis @ coeffs, False


def estimate_bias(
    log_img: Volume,
    posteriors: np.ndarray,
    fitted: GmmParams,
    order: int,
    labels: Sequence[int] | None = None,
) -> tuple[np.ndarray, Volume, bool]:
    """Fit a polynomial log-bias to the posterior-weighted intensity residual.

    The residual at voxel j is the precision-weighted posterior mean of
    ``y_j - mu_k`` and each voxel is weighted by its total precision
    ``sum_k w_jk / sigma_k**2``; this is the exact coordinate ascent step for
    the bias coefficients, which keeps EM's log-likelihood monotone.  The
    returned log-bias volume is zero-meaned (the constant coefficient absorbs
    the shift); on singular normal equations a zero bias and a raised flag
    come back instead.
    """
    dims = log_img.dims
    labels = list(labels) if labels is not None else list(fitted.labels)
    w = np.asarray(posteriors, dtype=np.float64).reshape(len(labels), -1)
    y = log_img.data.ravel().astype(np.float64)
    mu = np.array([fitted.means[k] for k in labels])
    sig = np.maximum(np.array([fitted.stds[k] for k in labels]), 1e-12)

    resid, weights = _bias_residual(y, w, mu, sig)
    basis = polynomial_basis(dims, order)
    coeffs, values, singular = _weighted_poly_fit(basis, resid, weights)
    if not singular:
        shift = values.mean()
        values = values - shift
        coeffs = coeffs.copy()
        coeffs[0] -= shift
    return coeffs, Volume(values.reshape(dims).astype(np.float32)), singular


def _spread_degenerate_means(
    mu: np.ndarray, sig: np.ndarray, y: np.ndarray, tol: float, sigma_min: float
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministically separate labels whose initial means coincide.

    With an uninformative (e.g. flat) prior the moment-based init gives every
    label the same mean and EM cannot break the symmetry. Tied groups are
    re-seeded evenly across the robust intensity range (1st..99th percentile)
    with deliberately narrow sigmas: since the atlas priors are fixed, a wide
    initial sigma lets one class swallow a dominant intensity mode and EM
    stalls in that basin.
    """
    mu = mu.copy()
    sig = sig.copy()
    lo, hi = np.quantile(y, [0.01, 0.99])
    order = np.argsort(mu, kind="stable")
    start = 0
    while start < len(order):
        stop = start + 1
        while stop < len(order) and mu[order[stop]] - mu[order[stop - 1]] <= tol:
            stop += 1
        group = np.sort(order[start:stop])
        if len(group) > 1:
            g = len(group)
            mu[group] = lo + (np.arange(g) + 0.5) / g * (hi - lo)
            sig[group] = max((hi - lo) / (4.0 * g), sigma_min)
        start = stop
    return mu, sig


def _estep(
    y: np.ndarray, log_a: np.ndarray, mu: np.ndarray, sig: np.ndarray
) -> tuple[np.ndarray, float]:
    logw = log_a - 0.5 * (((y[None, :] - mu[:, None]) / sig[:, None]) ** 2)
    logw -= (np.log(sig) + 0.5 * LOG_2PI)[:, None]
    top = logw.max(axis=0)
    with np.errstate(invalid="ignore"):
        norm = top + np.log(np.exp(logw - top).sum(axis=0))
    w = np.exp(logw - norm)
    return w, float(norm.sum())


def em_segment(
    img: Volume,
    atlas: Atlas,
    max_iter: int = 50,
    tol: float = 1e-6,
    bias: bool = False,
    bias_order: int = 3,
) -> EmResult:
    """Segment a scan by expectation-maximization under the atlas prior.

    E-step: posteriors proportional to atlas prior times Gaussian likelihood.
    M-step: posterior-weighted mean/std per label, std floored at 1e-3 of the
    working dynamic range. With ``bias=True`` the image is first mapped to
    log intensities ``log(255 I + 1)`` and a polynomial log-bias is refit each
    iteration and subtracted from the working image; fitted Gaussian
    parameters are then in the log domain.

    Initialization is deterministic: atlas-weighted intensity moments, with
    tied means spread over intensity quantiles. Iteration stops when the
    relative log-likelihood change drops below ``tol``.
    """
    if img.dims != atlas.dims:
        raise ValueError(f"dim mismatch: image {img.dims} vs atlas {atlas.dims}")
    dims = img.dims
    k_count = atlas.num_labels

    x = img.data.ravel().astype(np.float64)
    if not np.isfinite(x).all():
        raise ValueError("image contains NaN/Inf")
    y = np.log(255.0 * x + 1.0) if bias else x

    a = atlas.probs.reshape(k_count, -1).astype(np.float64)
    with np.errstate(divide="ignore"):
        log_a = np.log(a)

    span = float(y.max() - y.min())
    sigma_min = max(1e-3 * span, 1e-12)

    # Atlas-weighted moment init (deterministic, no restarts).
    mass = a.sum(axis=1)
    safe_mass = np.maximum(mass, 1e-30)
    mu = (a @ y) / safe_mass
    var = (a @ (y * y)) / safe_mass - mu * mu
    sig = np.sqrt(np.maximum(var, sigma_min**2))
    mu, sig = _spread_degenerate_means(
        mu, sig, y, tol=max(1e-6 * span, 1e-12), sigma_min=sigma_min
    )

    bias_log = np.zeros_like(y) if bias else None
    basis = polynomial_basis(dims, bias_order) if bias else None
    coeffs: np.ndarray | None = None
    singular = False

    ll_trace: list[float] = []
    w = a
    for it in range(max_iter):
        work = y - bias_log if bias else y
        w, ll = _estep(work, log_a, mu, sig)
        ll_trace.append(ll)
        if it > 0 and abs(ll - ll_trace[-2]) <= tol * abs(ll_trace[-2]):
            break
        if it == max_iter - 1:
            break

        denom = w.sum(axis=1)
        ok = denom > 1e-30
        new_mu = np.where(ok, (w @ work) / np.maximum(denom, 1e-30), mu)
        new_var = np.where(
            ok,
            (w @ (work * work)) / np.maximum(denom, 1e-30) - new_mu * new_mu,
            sig * sig,
        )
        mu = new_mu
        sig = np.sqrt(np.maximum(new_var, sigma_min**2))

        if bias:
            resid, weights = _bias_residual(y, w, mu, sig)
            coeffs, values, singular = _weighted_poly_fit(basis, resid, weights)
            if singular:
                coeffs, bias_log = np.zeros(basis.shape[1]), np.zeros_like(y)
            else:
                # Zero-mean the bias and compensate the means so the modeled
                # likelihood (and the ll trace) is unchanged.
                shift = values.mean()
                bias_log = values - shift
                coeffs = coeffs.copy()
                coeffs[0] -= shift
                mu = mu + shift

    # Argmax with ties broken by lowest label id.
    id_order = np.argsort(np.asarray(atlas.labels), kind="stable")
    winner = id_order[np.argmax(w[id_order], axis=0)]
    label_arr = np.asarray(atlas.labels, dtype=np.int32)[winner].reshape(dims)

    fitted = GmmParams(
        means={k: float(mu[ci]) for ci, k in enumerate(atlas.labels)},
        stds={k: float(sig[ci]) for ci, k in enumerate(atlas.labels)},
    )
    return EmResult(
        map_labels=LabelMap(label_arr, img.voxel_size),
        posteriors=w.astype(np.float32).reshape((k_count,) + dims),
        fitted=fitted,
        ll_trace=tuple(ll_trace),
        labels=atlas.labels,
        bias_log_coeffs=coeffs if bias else None,
        bias_log=Volume(bias_log.reshape(dims).astype(np.float32)) if bias else None,
        bias_singular=singular,
    )


def log_likelihood(img: Volume, atlas: Atlas, g: GmmParams) -> float:
    """Marginal log-likelihood of the atlas-weighted Gaussian mixture."""
    if img.dims != atlas.dims:
        raise ValueError(f"dim mismatch: image {img.dims} vs atlas {atlas.dims}")
    missing = set(atlas.labels) - set(g.means)
    if missing:
        raise ValueError(f"labels {sorted(missing)} have no GMM parameters")
    x = img.data.ravel().astype(np.float64)
    a = atlas.probs.reshape(atlas.num_labels, -1).astype(np.float64)
    with np.errstate(divide="ignore"):
        log_a = np.log(a)
    span = float(x.max() - x.min())
    sigma_min = max(1e-3 * span, 1e-12)
    mu = np.array([g.means[k] for k in atlas.labels])
    sig = np.maximum(np.array([g.stds[k] for k in atlas.labels]), sigma_min)
    _, ll = _estep(x, log_a, mu, sig)
    return ll


def ll_trace_is_monotone(trace: Sequence[float], slack: float = LL_SLACK) -> bool:
    """True if the log-likelihood never decreases beyond floating-point slack."""
    for prev, cur in zip(trace, list(trace)[1:]):
        if cur < prev - slack * (abs(prev) + 1.0):
            return False
    return True
