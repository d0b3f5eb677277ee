"""The four-punctured-sphere moduli space.

Strongly parabolic rank-2 Higgs bundles on CP^1 with punctures 0, 1, p0,
infinity.  The Hitchin base is the line of quadratic differentials
q = B dz^2 / (z(z-1)(z-p0)); the fiber over B != 0 is the elliptic curve
B x(x-1)(x-p0) + u^2 = 0, a torus of modulus tau with p0 = lambda(tau).

This module computes the derived constants of that geometry:

  c_sK      base normalization, int_{CP^1} (i/2) dz dz* / |z(z-1)(z-p0)|,
            so the special Kahler metric is (dr^2 + r^2 dtheta^2)/r in the
            rescaled polar coordinate r e^{i theta} = c_sK B;
  tau       spectral-torus modulus, from lambda inversion or from periods;
  c_fib     fiber lattice scale pi sqrt(2/Im tau) (fiber area 2 pi^2);
  lambda_T  sqrt of the smallest positive eigenvalue of -Laplace on the
            fiber torus, sqrt(2/Im tau);
  M_B       length of the shortest spectral-torus geodesic,
            sqrt(2 |B| c_sK / Im tau);
  Omega(n)  BPS indices 8, -2, 0 for n = 1, 2, > 2;

together with explicit Higgs-bundle representatives, the semiflat metric,
and the conjectured leading correction to the moduli-space metric on the
Hitchin section, -(2/pi) 8 K0(2 sqrt(2 r / Im tau)) (dr^2 + r^2 dtheta^2)
/ (2 r Im tau).
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .metrics import MetricComponents
from .special import (
    HalfPlanePoint,
    bessel_k,
    inverse_lambda,
    lattice_shortest_multiplicity,
    modular_lambda,
    reduce_to_fundamental_domain,
)

__all__ = [
    "ToyConfig",
    "BasePoint",
    "SpectralFiberPoint",
    "HiggsRepresentative",
    "higgs_representative",
    "csk",
    "periods",
    "semiflat_base_norm",
    "fiber_area",
    "lambda_T",
    "shortest_geodesic",
    "bps_omega",
    "gmn_correction",
    "semiflat_metric",
    "QuadratureToleranceError",
    "NonGenericTorusWarning",
]


class QuadratureToleranceError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class NonGenericTorusWarning(UserWarning):
    """The spectral torus has several inequivalent shortest geodesics (Im tau = 1 wall)."""


def _validate_p0(p0: complex) -> complex:
    p0 = complex(p0)
    d = min(abs(p0), abs(p0 - 1.0))
    if d < 1e-3:
        raise ValueError(
            f"p0 = {p0} is within 1e-3 of a degenerate configuration (punctures collide)"
        )
    return p0


# ----------------------------------------------------------------------
# special Kahler constant
# ----------------------------------------------------------------------

def _chi01(s):
    """Smooth transition, = 1 for s <= 1/2, = 0 for s >= 1 (bump quotient), vectorized."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s <= 0.5] = 1.0
    mid = (s > 0.5) & (s < 1.0)
    if np.any(mid):
        sm = s[mid]
        up = np.exp(-1.0 / (1.0 - sm))
        dn = np.exp(-1.0 / (sm - 0.5))
        out[mid] = up / (up + dn)
    return out


@lru_cache(maxsize=8)
def _gauss_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _tile_estimates(f, x0, x1, y0, y1):
    """Gauss product estimates of int f over the rectangle at orders 12 and 24."""
    vals = []
    for n in (12, 24):
        x, wx = _gauss_nodes(n)
        gx = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * x
        gy = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * x
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        W = np.multiply.outer(wx, wx) * (0.25 * (x1 - x0) * (y1 - y0))
        vals.append(float(np.sum(W * f(X, Y))))
    return vals[1], abs(vals[1] - vals[0])


def _adaptive_tiles(f, xbreaks, ybreaks, tol_abs: float, max_splits: int = 4000):
    """Adaptive tile quadrature of a smooth vectorized integrand f(X, Y).

    Starts from the feature-aligned rectangle grid given by the breakpoints
    and quadtree-refines the worst tiles until the summed Gauss 12-vs-24
    error estimate drops below ``tol_abs``.
    """
    xb = np.unique(np.asarray(xbreaks, dtype=float))
    yb = np.unique(np.asarray(ybreaks, dtype=float))
    heap = []
    total = 0.0
    err = 0.0
    counter = 0
    for i in range(len(xb) - 1):
        for j in range(len(yb) - 1):
            v, e = _tile_estimates(f, xb[i], xb[i + 1], yb[j], yb[j + 1])
            total += v
            err += e
            heapq.heappush(heap, (-e, counter, xb[i], xb[i + 1], yb[j], yb[j + 1], v))
            counter += 1
    splits = 0
    while err > tol_abs and heap and splits < max_splits:
        ne, _, x0, x1, y0, y1, v = heapq.heappop(heap)
        total -= v
        err += ne  # ne is negative
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        for (a0, a1, b0, b1) in ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)):
            v2, e2 = _tile_estimates(f, a0, a1, b0, b1)
            total += v2
            err += e2
            heapq.heappush(heap, (-e2, counter, a0, a1, b0, b1, v2))
            counter += 1
        splits += 1
    return total, err


def csk(p0: complex, rel_tol: float = 1e-9) -> float:
    """The base integral int_{CP^1} (i/2) dz dz*/|z(z-1)(z-p0)|.

    The plane is split by a smooth partition of unity into polar patches of
    radius d/4 around 0, 1, p0 (d = min pairwise puncture distance; the
    polar Jacobian removes the 1/|z-a| singularity), a patch around infinity
    in the w = 1/z chart (integrand 1/(|w| |(1-w)(1-p0 w)|), again polar),
    and a smooth compactly supported remainder in Cartesian coordinates.
    Every piece is integrated by adaptive feature-aligned Gauss tiles.
    """
    p0 = _validate_p0(p0)
    pts = [0.0 + 0.0j, 1.0 + 0.0j, p0]
    d = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
    rad = d / 4.0
    r_out = 2.0 * max(1.0, abs(p0)) + 2.0
    w_rad = 1.0 / r_out
    # rough scale for converting the relative tolerance to per-piece absolutes
    scale = 30.0
    tol_piece = rel_tol * scale / 6.0

    total = 0.0
    err_total = 0.0
    for a in pts:
        others = [b for b in pts if b != a]

        def g(RHO, TH, a=a, o0=others[0], o1=others[1]):
            z = a + RHO * np.exp(1j * TH)
            return _chi01(RHO / rad) / np.abs((z - o0) * (z - o1))

        v, e = _adaptive_tiles(
            g, [0.0, rad / 2, rad], np.linspace(0.0, 2.0 * np.pi, 9), tol_piece
        )
        total += v
        err_total += e

    def g_inf(RHO, TH):
        w = RHO * np.exp(1j * TH)
        return _chi01(RHO / w_rad) / np.abs((1.0 - w) * (1.0 - p0 * w))

    v, e = _adaptive_tiles(
        g_inf, [0.0, w_rad / 2, w_rad], np.linspace(0.0, 2.0 * np.pi, 9), tol_piece
    )
    total += v
    err_total += e

    def remainder(X, Y):
        Z = X + 1j * Y
        AZ = np.abs(Z)
        cut = np.ones_like(X)
        for a in pts:
            cut -= _chi01(np.abs(Z - a) / rad)
        with np.errstate(divide="ignore"):
            cut -= _chi01(1.0 / (AZ * w_rad))
        cut = np.clip(cut, 0.0, 1.0)
        out = np.zeros_like(X)
        live = cut > 0.0
        if np.any(live):
            zl = Z[live]
            out[live] = cut[live] / np.abs(zl * (zl - 1.0) * (zl - p0))
        return out

    box = 2.0 * r_out  # the infinity patch transition lives in [r_out, 2 r_out]
    breaks = {-box, box, 0.0, -r_out, r_out}
    xbreaks = set(breaks)
    ybreaks = set(breaks)
    for a in pts:
        for s in (rad, rad / 2):
            xbreaks.update((a.real - s, a.real + s))
            ybreaks.update((a.imag - s, a.imag + s))
    xbreaks = [v for v in xbreaks if -box <= v <= box]
    ybreaks = [v for v in ybreaks if -box <= v <= box]
    v, e = _adaptive_tiles(remainder, sorted(xbreaks), sorted(ybreaks), tol_piece)
    total += v
    err_total += e

    if err_total > max(50.0 * rel_tol * total, 1e-12):
        raise QuadratureToleranceError(
            f"csk quadrature error estimate {err_total:.2e} exceeds tolerance", total
        )
    return total


# ----------------------------------------------------------------------
# periods of the spectral curve
# ----------------------------------------------------------------------

def _segment_distance(p: complex, a: complex, b: complex) -> float:
    """Distance from p to the segment [a, b]."""
    ab = b - a
    t = ((p - a) * np.conj(ab)).real / abs(ab) ** 2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def _choose_cycles(p0: complex):
    """Two branch-point pairs sharing a point, with the best clearances.

    A contour around two finite branch points is closed for the square root;
    two pair-cycles sharing a point form a homology basis.  The third point
    must stay outside the surrounding ellipse, so each pair is scored by the
    distance from the remaining point to the pair's segment.
    """
    pts = [0.0 + 0.0j, 1.0 + 0.0j, complex(p0)]
    pairs = [(0, 1), (1, 2), (0, 2)]

    def clearance(i, j):
        k = 3 - i - j
        return _segment_distance(pts[k], pts[i], pts[j])

    combos = [((0, 1), (1, 2)), ((0, 1), (0, 2)), ((1, 2), (0, 2))]
    best = max(combos, key=lambda c: min(clearance(*c[0]), clearance(*c[1])))
    return [(pts[i], pts[j], pts[3 - i - j]) for i, j in best]


def _dumbbell_period(a: complex, b: complex, other: complex, p0: complex, n: int) -> complex:
    """Contour integral of dz/sqrt(z(z-1)(z-p0)) around the pair {a, b}.

    Ellipse surrounding the segment [a, b] with clearance from the remaining
    branch point; the square root is tracked continuously along the contour.
    """
    center = 0.5 * (a + b)
    span = 0.5 * abs(b - a)
    clear = _segment_distance(other, a, b)
    if clear <= 0:
        raise RuntimeError("branch points are collinear and unseparable")
    direction = (b - a) / abs(b - a)
    major = span + 0.3 * clear
    minor = 0.3 * clear

    s = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    z = center + direction * (major * np.cos(s) + 1j * minor * np.sin(s))
    dz = direction * (-major * np.sin(s) + 1j * minor * np.cos(s))

    f = 1.0 / np.sqrt(z * (z - 1.0) * (z - p0))
    # branch tracking: flip sign whenever continuity prefers it
    for k in range(1, n):
        if abs(f[k] - f[k - 1]) > abs(f[k] + f[k - 1]):
            f[k] = -f[k]
    # closed contour around two branch points: no monodromy, check closure
    if abs(f[0] - f[-1]) > abs(f[0] + f[-1]):
        raise RuntimeError("branch tracking failed to close around the cycle")
    return complex(np.sum(f * dz) * (2.0 * np.pi / n))


def periods(p0: complex, *, n_start: int = 256, tol: float = 1e-10):
    """Periods (omega1, omega2) of dz/sqrt(z(z-1)(z-p0)), Im(omega2/omega1) > 0.

    Dumbbell contours around two adjacent branch-point pairs (chosen by
    clearance among {0,1}, {1,p0}, {0,p0}); trapezoid sums on the smooth
    closed contours, doubled until converged; the square root branch is
    tracked continuously.
    """
    p0 = _validate_p0(p0)
    cycles = _choose_cycles(p0)

    def converge(a, b, other):
        n = n_start
        prev = _dumbbell_period(a, b, other, p0, n)
        for _ in range(8):
            n *= 2
            cur = _dumbbell_period(a, b, other, p0, n)
            if abs(cur - prev) < tol * max(1.0, abs(cur)):
                return cur
            prev = cur
        raise RuntimeError("period quadrature did not converge")

    om1 = converge(*cycles[0])
    om2 = converge(*cycles[1])
    if (om2 / om1).imag < 0:
        om2 = -om2
    return om1, om2


def tau_from_periods(p0: complex) -> complex:
    """Fundamental-domain modulus of the spectral torus computed from periods."""
    om1, om2 = periods(p0)
    return reduce_to_fundamental_domain(om2 / om1)


# ----------------------------------------------------------------------
# configuration and derived constants
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ToyConfig:
    """Derived constants of the four-punctured-sphere geometry at p0."""

    p0: complex
    tau: HalfPlanePoint
    c_sk: float
    c_fib: float
    lambda_t: float

    @classmethod
    def from_p0(cls, p0: complex, *, warn_non_generic: bool = True) -> "ToyConfig":
        p0 = _validate_p0(p0)
        tau = inverse_lambda(p0)
        im = tau.tau.imag
        cfg = cls(
            p0=p0,
            tau=tau,
            c_sk=csk(p0),
            c_fib=float(np.pi * np.sqrt(2.0 / im)),
            lambda_t=float(np.sqrt(2.0 / im)),
        )
        if warn_non_generic and lattice_shortest_multiplicity(tau.tau) > 1:
            warnings.warn(
                "spectral torus has several inequivalent shortest geodesics "
                f"(tau = {tau.tau}); the leading BPS correction is degenerate",
                NonGenericTorusWarning,
            )
        return cfg


@dataclass(frozen=True)
class BasePoint:
    """A nonzero point B of the Hitchin base with its rescaled polar coordinates."""

    B: complex
    c_sk: float

    def __post_init__(self):
        if self.B == 0:
            raise ValueError("base point must be nonzero")

    @property
    def r(self) -> float:
        return self.c_sk * abs(self.B)

    @property
    def theta(self) -> float:
        return float(np.angle(self.B))


@dataclass(frozen=True)
class SpectralFiberPoint:
    """A point (x, u) of the elliptic fiber B x(x-1)(x-p0) + u^2 = 0."""

    p0: complex
    B: complex
    x: complex
    u: complex

    def __post_init__(self):
        if self.B == 0:
            raise ValueError("fiber points require B != 0")
        defect = abs(self.B * self.x * (self.x - 1.0) * (self.x - self.p0) + self.u**2)
        scale = max(1.0, abs(self.B))
        if defect > 1e-10 * scale:
            raise ValueError(f"fiber constraint violated: |B x(x-1)(x-p0) + u^2| = {defect:.2e}")


@dataclass
class HiggsRepresentative:
    """phi = numerator / (z(z-1)(z-p0)) dz with polynomial entries."""

    num: list  # 2x2 nested list of coefficient arrays (ascending powers)
    den: np.ndarray
    p0: complex
    B: complex

    def __call__(self, z: complex) -> np.ndarray:
        den = npoly.polyval(z, self.den)
        return np.array(
            [
                [npoly.polyval(z, self.num[0][0]), npoly.polyval(z, self.num[0][1])],
                [npoly.polyval(z, self.num[1][0]), npoly.polyval(z, self.num[1][1])],
            ],
            dtype=complex,
        ) / den

    def det_defect(self, z: complex) -> complex:
        """det(phi/dz) * z(z-1)(z-p0) / B - 1 (pointwise; 0 identically)."""
        m = self(z)
        den = npoly.polyval(z, self.den)
        return (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) * den / self.B - 1.0


def higgs_representative(pt: SpectralFiberPoint | None = None, *, small_stratum_B: complex | None = None, p0: complex | None = None) -> HiggsRepresentative:
    """Explicit Higgs field over a fiber point (large stratum) or B (small stratum).

    Large stratum: phi = [[u, -(B z(z-1)(z-p0) + u^2)/(z - x)], [z - x, -u]]
    dz / (z(z-1)(z-p0)); the upper-right division is exact because of the
    fiber constraint.  Small stratum: off-diagonal companion form
    [[0, 1], [-B/(z(z-1)(z-p0)), 0]] dz.
    """
    if (pt is None) == (small_stratum_B is None):
        raise ValueError("pass exactly one of a fiber point or a small-stratum B")
    if small_stratum_B is not None:
        if p0 is None:
            raise ValueError("small stratum requires p0")
        p0 = _validate_p0(p0)
        B = complex(small_stratum_B)
        if B == 0:
            raise ValueError("B must be nonzero")
        den = _cubic(p0)
        num = [
            [np.zeros(1, dtype=complex), den.astype(complex)],
            [np.array([-B], dtype=complex), np.zeros(1, dtype=complex)],
        ]
        return HiggsRepresentative(num, den, p0, B)

    p0 = _validate_p0(pt.p0)
    B, x, u = complex(pt.B), complex(pt.x), complex(pt.u)
    den = _cubic(p0)
    # P(z) = B z(z-1)(z-p0) + u^2, divided exactly by (z - x)
    P = B * den
    P = P.astype(complex)
    P[0] += u**2
    quot, rem = npoly.polydiv(P, np.array([-x, 1.0], dtype=complex))
    if np.max(np.abs(rem)) > 1e-10 * max(1.0, abs(B)):
        raise ValueError(
            f"inexact polynomial division: remainder {np.max(np.abs(rem)):.2e}; "
            "the fiber constraint is violated"
        )
    num = [
        [np.array([u], dtype=complex), -quot],
        [np.array([-x, 1.0], dtype=complex), np.array([-u], dtype=complex)],
    ]
    return HiggsRepresentative(num, den, p0, B)


def _cubic(p0: complex) -> np.ndarray:
    """Coefficients of z(z-1)(z-p0), ascending."""
    return npoly.polymul(npoly.polymul([0.0, 1.0], [-1.0, 1.0]), [-p0, 1.0]).astype(complex)


# ----------------------------------------------------------------------
# semiflat geometry
# ----------------------------------------------------------------------

def semiflat_base_norm(cfg: ToyConfig, B: complex, Bdot: complex) -> float:
    """Special Kahler squared norm of the base variation: c_sK |Bdot|^2 / |B|."""
    if B == 0:
        raise ValueError("B must be nonzero")
    return cfg.c_sk * abs(Bdot) ** 2 / abs(B)


def fiber_area() -> float:
    """Area of every regular semiflat torus fiber: 2 pi^2."""
    return 2.0 * np.pi**2


def lambda_T(tau) -> float:
    """sqrt of the smallest nonzero eigenvalue of -Laplace on the fiber torus.

    The fiber is C / c_fib(Z + tau Z) with c_fib = pi sqrt(2/Im tau); the
    smallest dual-lattice vector has length 1/(c_fib Im tau), giving
    lambda_T = sqrt(2 / Im tau).
    """
    t = tau.tau if isinstance(tau, HalfPlanePoint) else complex(tau)
    if not t.imag > 0:
        raise ValueError("tau must lie in the upper half plane")
    return float(np.sqrt(2.0 / t.imag))


def shortest_geodesic(cfg: ToyConfig, B: complex) -> float:
    """M_B = sqrt(2 |B| c_sK / Im tau), the shortest spectral-torus geodesic."""
    if B == 0:
        raise ValueError("B must be nonzero")
    return float(np.sqrt(2.0 * abs(B) * cfg.c_sk / cfg.tau.tau.imag))


def bps_omega(n: int) -> int:
    """BPS index of n times a primitive charge: 8, -2, 0 for n = 1, 2, > 2."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return 8 if n == 1 else (-2 if n == 2 else 0)


def gmn_correction(cfg: ToyConfig, r: float) -> MetricComponents:
    """Predicted leading correction g_L2 - g_sf on the Hitchin section.

    Base block -(2/pi) 8 K0(2 sqrt(2 r / Im tau)) (dr^2 + r^2 dtheta^2)
    / (2 r Im tau) in the rescaled polar coordinates.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    im = cfg.tau.tau.imag
    coeff = -(2.0 / np.pi) * bps_omega(1) * bessel_k(0, 2.0 * np.sqrt(2.0 * r / im)) / (2.0 * r * im)
    return MetricComponents(("r", "theta"), np.diag([coeff, coeff * r**2]))


def semiflat_metric(cfg: ToyConfig, base: BasePoint) -> MetricComponents:
    """Block-diagonal semiflat metric at a base point, coordinates (r, theta, x, y).

    Base block diag(1/r, r) (the flat cone of angle pi); fiber block the
    Euclidean metric dx^2 + dy^2 on C / c_fib(Z + tau Z), total area 2 pi^2.
    """
    r = base.r
    if r <= 0:
        raise ValueError("base point must have positive radius")
    g = np.diag([1.0 / r, r, 1.0, 1.0])
    return MetricComponents(("r", "theta", "x", "y"), g)
