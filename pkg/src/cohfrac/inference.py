"""Dip fitting and bounds on the coherent power fraction.

The dip model is g(tau) = 1 - A exp(-|tau - center| / tau_c).  The dip
amplitude A maps onto bounds on the coherent fraction rho:

    upper(A) = sqrt(2 A)
    lower(A) = 2 A                          for 0 <= A <= 1/4
             = 1/2 + sqrt(4 A - 1) / 2      for 1/4 <= A <= 1/2
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .correlator import CorrelationHistogram

__all__ = [
    "FitError",
    "NonPhysicalError",
    "DipFit",
    "BoundSummary",
    "RhoBounds",
    "fit_dip",
    "delta_exclusions",
    "rho_upper_bound",
    "rho_lower_bound",
    "rho_from_g2x",
    "unc_g2_region",
    "propagate_bounds",
]


class FitError(RuntimeError):
    """The dip fit did not converge."""


class NonPhysicalError(ValueError):
    """No probability mass of the fitted amplitude lies in the physical range."""


@dataclass
class DipFit:
    A: float
    tau_c: float
    sigma_A: float
    sigma_tau: float
    covariance: np.ndarray
    chi2_red: float
    window: tuple[float, float]
    n_points: int
    center: float = 0.0
    degenerate: bool = False

    @property
    def g2x0(self) -> float:
        return 1.0 - self.A

    def model(self, tau) -> np.ndarray:
        return 1.0 - self.A * np.exp(-np.abs(np.asarray(tau) - self.center) / self.tau_c)


def _profile(tau, y, wts, tc):
    """Closed-form weighted amplitude for fixed tau_c and its chi-square."""
    e = np.exp(-tau / tc)
    see = np.sum(wts * e * e)
    A = -np.sum(wts * e * (y - 1.0)) / see
    r = y - 1.0 + A * e
    return A, float(np.sum(wts * r * r)), see


def delta_exclusions(delta: float, tau_hat: float, factor: float = 5.0) -> list[tuple[float, float]]:
    """Regions around +-delta where residual bunching would bias the dip fit.

    The half-width is capped at delta/2 so the dip core is never excluded.
    """
    half = min(factor * tau_hat, 0.5 * delta)
    return [(delta - half, delta + half), (-delta - half, -delta + half)]


def fit_dip(h: CorrelationHistogram, exclude=(), *, delta: float | None = None,
            window: float | None = None, center: float = 0.0,
            n_grid: int = 200, max_iter: int = 200, reweight: int = 2) -> DipFit:
    """Weighted least-squares fit of the two-sided exponential dip.

    ``exclude`` lists (lo, hi) intervals of tau to drop. With ``delta``
    given, a preliminary fit inside |tau - center| < delta/2 estimates the
    dip width and the regions around +-delta are excluded as well.

    The first pass weights bins by their observed counts; ``reweight``
    further passes use the Poisson variance predicted by the previous fit,
    which removes the low bias of count-weighted fits at small counts.
    """
    if delta is not None:
        pre = fit_dip(h, exclude, window=min(window or h.half_window, 0.5 * delta),
                      center=center, n_grid=n_grid, max_iter=max_iter, reweight=reweight)
        tau_hat = math.inf if pre.degenerate else pre.tau_c
        exclude = list(exclude) + delta_exclusions(delta, tau_hat)
        return fit_dip(h, exclude, window=window, center=center, n_grid=n_grid,
                       max_iter=max_iter, reweight=reweight)
    fit = _fit_window(h, exclude, window, center, n_grid, max_iter, None)
    for _ in range(reweight):
        if fit.degenerate:
            break
        fit = _fit_window(h, exclude, window, center, n_grid, max_iter, fit)
    return fit


def _fit_window(h, exclude, window, center, n_grid, max_iter, prior) -> DipFit:
    w = h.bin_width
    W = h.half_window if window is None else window
    tau_all = h.centers - center
    mask = np.abs(tau_all) <= W
    for lo, hi in exclude:
        mask &= ~((h.centers >= lo) & (h.centers <= hi))
    tau = np.abs(tau_all[mask])
    y = h.g[mask]
    if prior is None:
        sig = h.sigma[mask]
    else:
        expected = np.maximum(prior.model(h.centers[mask]) * h.norm, 1.0)
        sig = np.sqrt(expected) / h.norm
    if len(tau) < 20:
        raise ValueError(f"need at least 20 bins inside the fit window, have {len(tau)}")
    if np.any(sig <= 0):
        raise ValueError("per-bin errors must be positive")
    wts = 1.0 / sig**2
    dof = max(len(tau) - 2, 1)

    lo_tc, hi_tc = w, W
    grid = np.geomspace(2.0 * w, W, n_grid)
    chi = np.empty(n_grid)
    amps = np.empty(n_grid)
    sees = np.empty(n_grid)
    for k, tc in enumerate(grid):
        amps[k], chi[k], sees[k] = _profile(tau, y, wts, tc)
    k_best = int(np.argmin(chi))
    A, tc = float(amps[k_best]), float(grid[k_best])
    on_edge = k_best in (0, n_grid - 1)

    def fallback() -> DipFit:
        # Width undetermined: the amplitude error is the profile interval
        # over all widths. chi2 is quadratic in A at fixed width, so the
        # interval is a union of per-width intervals.
        A0, c0 = float(amps[k_best]), float(chi[k_best])
        chi2_red = c0 / dof
        room = chi2_red - (chi - c0)
        ok = room >= 0
        half = np.sqrt(room[ok] / sees[ok])
        lo, hi = np.min(amps[ok] - half), np.max(amps[ok] + half)
        sigma_A = max(hi - A0, A0 - lo)
        cov = np.array([[sigma_A**2, 0.0], [0.0, np.inf]])
        return DipFit(A0, float(grid[k_best]), float(sigma_A), math.inf, cov, chi2_red,
                      (-W, W), len(tau), center, degenerate=True)

    def jac(A, tc):
        e = np.exp(-tau / tc)
        return np.column_stack((-e, -A * e * tau / tc**2)), 1.0 - A * e

    def chisq(A, tc):
        r = y - (1.0 - A * np.exp(-tau / tc))
        return float(np.sum(wts * r * r))

    c_cur = chisq(A, tc)
    converged = False
    for _ in range(max_iter):
        J, m = jac(A, tc)
        JW = J.T * wts
        N = JW @ J
        try:
            step = np.linalg.solve(N, JW @ (y - m))
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-6:
            A_new, tc_new = A + lam * step[0], tc + lam * step[1]
            if tc_new > 0 and chisq(A_new, tc_new) <= c_cur * (1 + 1e-15):
                break
            lam *= 0.5
        else:
            converged = True  # no descent direction left
            break
        A, tc = A_new, tc_new
        c_new = chisq(A, tc)
        # a step far below the statistical error is as good as zero
        spread = np.sqrt(np.abs(np.diag(np.linalg.inv(N))))
        small = np.all(np.abs(lam * step) <= 1e-6 * spread) or (
            abs(lam * step[0]) <= 1e-12 * max(abs(A), 1e-12) + 1e-15
            and abs(lam * step[1]) <= 1e-10 * tc)
        c_cur = c_new
        if not (lo_tc <= tc <= hi_tc):
            break
        if small:
            converged = True
            break

    ok = converged and lo_tc <= tc <= hi_tc
    if ok:
        J, _ = jac(A, tc)
        N = (J.T * wts) @ J
        # judge conditioning in units where both parameters are O(1)
        s = np.array([1.0, tc])
        if np.linalg.cond(N * np.outer(s, s)) > 1e14:
            ok = False
    if not ok:
        fb = fallback()
        # flat data, or a dip wider/narrower than the window can resolve
        if abs(fb.A) <= 3.0 * fb.sigma_A or on_edge:
            return fb
        raise FitError(
            f"dip fit did not converge (tau_c={tc:g} s, allowed [{lo_tc:g}, {hi_tc:g}] s)"
        )
    chi2_red = c_cur / dof
    cov = np.linalg.inv(N) * chi2_red
    return DipFit(float(A), float(tc), math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1]), cov,
                  chi2_red, (-W, W), len(tau), center)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def _check_amplitude(A: float) -> None:
    if not 0.0 <= A <= 0.5:
        raise ValueError(f"dip amplitude must lie in [0, 1/2], got {A!r}")


def rho_upper_bound(A: float) -> float:
    _check_amplitude(A)
    return math.sqrt(2.0 * A)


def rho_lower_bound(A: float) -> float:
    _check_amplitude(A)
    if A <= 0.25:
        return 2.0 * A
    return 0.5 + 0.5 * math.sqrt(4.0 * A - 1.0)


_upper_v = lambda A: np.sqrt(2.0 * A)
_lower_v = lambda A: np.where(A <= 0.25, 2.0 * A, 0.5 + 0.5 * np.sqrt(np.maximum(4.0 * A - 1.0, 0.0)))


def rho_from_g2x(g2x0: float, g2_unc_0: float) -> list[float]:
    """Coherent fractions in [0, 1] consistent with a zero-delay g2X value."""
    if g2x0 < 0 or g2_unc_0 < 0:
        raise ValueError("correlation values must be non-negative")
    a = 0.5 * g2_unc_0 - 1.5
    b = 2.0 - g2_unc_0
    c = 0.5 * g2_unc_0 - g2x0
    if a == 0.0:
        roots = [] if b == 0.0 else [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            if disc > -1e-12:
                disc = 0.0
            else:
                return []
        sq = math.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (b + math.copysign(sq, b)) if b != 0 else -0.5 * sq
        roots = [q / a, c / q] if q != 0 else [0.0]
    eps = 1e-12
    out = sorted({min(max(r, 0.0), 1.0) for r in roots if -eps <= r <= 1 + eps})
    return out


def unc_g2_region(g2x0: float) -> tuple[float, float | None]:
    """Allowed range of g2_unc(0) for a measured g2X(0), assuming 0 <= rho <= 1."""
    if g2x0 < 0:
        raise ValueError("g2x0 must be non-negative")
    if g2x0 <= 2.0 / 3.0:
        lower = 0.0
    elif g2x0 <= 1.0:
        lower = 3.0 + 1.0 / (1.0 - 2.0 * g2x0)
    else:
        lower = 2.0 * g2x0
    upper = 2.0 * g2x0 if g2x0 < 0.5 else None
    return lower, upper


@dataclass
class BoundSummary:
    mean: float
    ci_lo: float
    ci_hi: float


@dataclass
class RhoBounds:
    upper: BoundSummary
    lower: BoundSummary
    method: str
    samples: int
    A: float
    sigma_A: float
    confidence: float
    physical_mass: float
    seed: int | None = None

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.upper.mean + self.lower.mean)

    def as_dict(self) -> dict:
        return asdict(self)


def _quadrature(A_hat, sigma, lo, hi, confidence, n):
    grid = np.linspace(lo, hi, n)
    pdf = stats.norm.pdf(grid, A_hat, sigma)
    # cumulative trapezoid
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))))
    mass = cdf[-1]
    cdf /= mass
    alpha = 0.5 * (1.0 - confidence)
    qa = np.interp([alpha, 1.0 - alpha], cdf, grid)
    out = []
    for f in (_upper_v, _lower_v):
        fv = f(grid)
        mean = trapezoid(fv * pdf, grid) / mass
        ci = f(qa)
        out.append(BoundSummary(float(mean), float(ci[0]), float(ci[1])))
    return out


def _monte_carlo(A_hat, sigma, lo, hi, confidence, n, seed):
    rng = np.random.default_rng(seed)
    kept = []
    total = 0
    while total < n:
        draw = rng.normal(A_hat, sigma, size=max(n, 1024))
        draw = draw[(draw >= lo) & (draw <= hi)]
        kept.append(draw)
        total += len(draw)
    A = np.concatenate(kept)[:n]
    alpha = 0.5 * (1.0 - confidence)
    out = []
    for f in (_upper_v, _lower_v):
        fv = f(A)
        ci = np.quantile(fv, [alpha, 1.0 - alpha])
        out.append(BoundSummary(float(fv.mean()), float(ci[0]), float(ci[1])))
    return out


def propagate_bounds(fit, confidence: float = 0.90, method: str = "quadrature",
                     n: int | None = None, seed: int | None = 0,
                     sigma_A: float | None = None) -> RhoBounds:
    """Expectation and central confidence interval of both rho bounds.

    The amplitude is taken as normal N(A, sigma_A) truncated to the physical
    range [0, 1/2] and renormalized. ``fit`` is a DipFit or a bare amplitude
    (then ``sigma_A`` is required).
    """
    if isinstance(fit, DipFit):
        A_hat, sigma = fit.A, fit.sigma_A
    else:
        A_hat, sigma = float(fit), sigma_A
    if sigma is None or not sigma > 0 or not math.isfinite(sigma):
        raise ValueError("sigma_A must be positive and finite")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    mass = stats.norm.cdf(0.5, A_hat, sigma) - stats.norm.cdf(0.0, A_hat, sigma)
    if not mass >= 1e-6:
        raise NonPhysicalError(
            f"A = {A_hat:g} +- {sigma:g} leaves {mass:.3g} probability in [0, 1/2]"
        )
    lo = max(0.0, A_hat - 8.0 * sigma)
    hi = min(0.5, A_hat + 8.0 * sigma)
    if lo >= hi:
        lo, hi = (0.0, min(0.5, 8.0 * sigma)) if A_hat < 0 else (max(0.0, 0.5 - 8.0 * sigma), 0.5)
    if method == "quadrature":
        n = 100_000 if n is None else n
        upper, lower = _quadrature(A_hat, sigma, lo, hi, confidence, n)
        seed = None
    elif method == "monte-carlo":
        n = 1_000_000 if n is None else n
        upper, lower = _monte_carlo(A_hat, sigma, 0.0, 0.5, confidence, n, seed)
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    return RhoBounds(upper, lower, method, n, A_hat, sigma, confidence, float(mass), seed)
