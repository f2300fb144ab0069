"""Bivariate copulas: Gaussian, Gumbel, BB1 and independence.

Archimedean families are handled through their generator ``psi`` (so that
``C(u, v) = psi(phi(u) + phi(v))`` with ``phi = psi^{-1}``) and the log of
``-psi'``, which keeps h-functions and densities stable in the tails.
All functions are vectorised over ``u`` and ``v``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

from .errors import BoundaryParameter, ConvergenceFailure, DomainError, TailOutOfRange

FAMILIES = ("gaussian", "gumbel", "bb1", "independence")
GUMBEL_MAX = 30.0
_EPS = 1e-6
_LN2 = np.log(2.0)


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family with parameters.

    ``params`` is ``(rho,)`` for Gaussian, ``(theta,)`` for Gumbel,
    ``(theta, delta)`` for BB1 and ``()`` for independence.  ``role`` tags the
    link in a Markov tree, e.g. ``"h12"`` (hours 12-13) or ``"noon"``.
    """

    family: str
    params: tuple = ()
    role: str | None = None

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if fam not in FAMILIES:
            raise ValueError(f"unknown copula family {self.family!r}")
        n = {"gaussian": 1, "gumbel": 1, "bb1": 2, "independence": 0}[fam]
        if len(self.params) != n:
            raise ValueError(f"{fam} takes {n} parameter(s), got {self.params}")
        if fam == "gaussian" and not -1 < self.params[0] < 1:
            raise ValueError("Gaussian rho must lie in (-1, 1)")
        if fam == "gumbel" and not self.params[0] >= 1:
            raise ValueError("Gumbel theta must be >= 1")
        if fam == "bb1" and not (self.params[0] > 0 and self.params[1] >= 1):
            raise ValueError("BB1 needs theta > 0 and delta >= 1")

    @classmethod
    def independence(cls, role=None) -> "CopulaSpec":
        return cls("independence", (), role)

    @property
    def name(self) -> str:
        return {"gaussian": "Gaussian", "gumbel": "Gumbel", "bb1": "BB1", "independence": "Independence"}[self.family]

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params), "role": self.role}

    @classmethod
    def from_dict(cls, data: dict) -> "CopulaSpec":
        return cls(data["family"], tuple(data["params"]), data.get("role"))


# --------------------------------------------------------------------------
# Archimedean generators.  L(t) = log(-psi'(t)), L2(t) = log(psi''(t)).

class _Gumbel:
    def __init__(self, theta):
        self.theta = theta
        self.a = 1.0 / theta

    def phi(self, u):
        return (-np.log(u)) ** self.theta

    def psi(self, t):
        return np.exp(-(t ** self.a))

    def log_dpsi(self, t):
        a = self.a
        return np.log(a) + (a - 1) * np.log(t) - t**a

    def log_d2psi(self, t):
        a = self.a
        return np.log(a) + (a - 2) * np.log(t) - t**a + np.log((1 - a) + a * t**a)

    def dlog_dpsi_dr(self, r):
        # derivative of L(exp(r)) with respect to r
        a = self.a
        return (a - 1) - a * np.exp(a * r)


class _BB1:
    def __init__(self, theta, delta):
        self.theta = theta
        self.delta = delta
        self.a = 1.0 / delta
        self.b = 1.0 / theta

    def phi(self, u):
        return np.expm1(-self.theta * np.log(u)) ** self.delta

    def psi(self, t):
        return np.exp(-self.b * np.log1p(t**self.a))

    def log_dpsi(self, t):
        a, b = self.a, self.b
        return np.log(a * b) + (a - 1) * np.log(t) - (b + 1) * np.log1p(t**a)

    def log_d2psi(self, t):
        a, b = self.a, self.b
        ta = t**a
        return (np.log(a * b) + (a - 2) * np.log(t) - (b + 2) * np.log1p(ta)
                + np.log((1 - a) * (1 + ta) + (b + 1) * a * ta))

    def dlog_dpsi_dr(self, r):
        a, b = self.a, self.b
        sig = 1.0 / (1.0 + np.exp(-a * r))
        return (a - 1) - (b + 1) * a * sig


def _generator(spec: CopulaSpec):
    if spec.family == "gumbel":
        return _Gumbel(spec.params[0])
    if spec.family == "bb1":
        return _BB1(*spec.params)
    return None


def _check_unit(*arrays):
    for x in arrays:
        if np.any(~((x > 0) & (x < 1))):
            raise DomainError("copula arguments must lie in the open unit interval")


def _as_arrays(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.broadcast_arrays(u, v)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# --------------------------------------------------------------------------
# Bivariate normal CDF via the Plackett-type integral over arcsin(rho).

_GL_NODES, _GL_WEIGHTS = leggauss(48)


def bvn_cdf(x, y, rho: float, panels: int = 8):
    """P(X <= x, Y <= y) for a standard bivariate normal with correlation ``rho``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    base = ndtr(x) * ndtr(y)
    if rho == 0:
        return base
    top = np.arcsin(rho)
    edges = np.linspace(0.0, top, panels + 1)
    total = np.zeros(x.shape)
    xx, yy = x[..., None], y[..., None]
    for lo, hi in zip(edges[:-1], edges[1:]):
        th = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        c2 = np.cos(th) ** 2
        integrand = np.exp(-(xx**2 + yy**2 - 2 * xx * yy * np.sin(th)) / (2 * c2))
        total += 0.5 * (hi - lo) * (integrand @ _GL_WEIGHTS)
    return base + total / (2 * np.pi)


# --------------------------------------------------------------------------
# Public kernel

def copula_cdf(spec: CopulaSpec, u, v):
    u, v = _as_arrays(u, v)
    _check_unit(u, v)
    fam = spec.family
    if fam == "independence":
        out = u * v
    elif fam == "gaussian":
        out = bvn_cdf(ndtri(u), ndtri(v), spec.params[0])
        out = np.clip(out, np.maximum(u + v - 1, 0), np.minimum(u, v))
    else:
        g = _generator(spec)
        out = g.psi(g.phi(u) + g.phi(v))
    return _out(out)


def copula_pdf(spec: CopulaSpec, u, v):
    return _out(np.exp(copula_logpdf(spec, u, v)))


def copula_logpdf(spec: CopulaSpec, u, v):
    u, v = _as_arrays(u, v)
    _check_unit(u, v)
    fam = spec.family
    if fam == "independence":
        return _out(np.zeros(u.shape))
    if fam == "gaussian":
        rho = spec.params[0]
        x, y = ndtri(u), ndtri(v)
        r2 = 1 - rho**2
        return _out(-0.5 * np.log(r2) - (rho**2 * (x**2 + y**2) - 2 * rho * x * y) / (2 * r2))
    g = _generator(spec)
    tu, tv = g.phi(u), g.phi(v)
    # c = psi''(s) * phi'(u) * phi'(v) with phi'(u) = 1 / psi'(phi(u))
    return _out(g.log_d2psi(tu + tv) - g.log_dpsi(tu) - g.log_dpsi(tv))


def h_function(spec: CopulaSpec, u, v):
    """Conditional distribution P(V <= v | U = u) = dC(u, v)/du."""
    u, v = _as_arrays(u, v)
    _check_unit(u, v)
    fam = spec.family
    if fam == "independence":
        return _out(v.copy())
    if fam == "gaussian":
        rho = spec.params[0]
        return _out(ndtr((ndtri(v) - rho * ndtri(u)) / np.sqrt(1 - rho**2)))
    g = _generator(spec)
    tu = g.phi(u)
    return _out(np.minimum(np.exp(g.log_dpsi(tu + g.phi(v)) - g.log_dpsi(tu)), 1.0))


def h_inverse(spec: CopulaSpec, u, w, max_iter: int = 200, tol: float = 1e-13):
    """Solve ``h_function(spec, u, v) = w`` for ``v``.

    Gaussian is closed form.  For the Archimedean families the equation
    ``log(-psi'(s)) = log(-psi'(phi(u))) + log(w)`` is solved for
    ``r = log s``; in ``r`` the left side is concave and decreasing, so a
    step-limited Newton iteration guarded by a bisection bracket converges
    from the start ``s = phi(u)``.
    """
    u, w = _as_arrays(u, w)
    _check_unit(u, w)
    fam = spec.family
    if fam == "independence":
        return _out(w.copy())
    if fam == "gaussian":
        rho = spec.params[0]
        return _out(ndtr(ndtri(w) * np.sqrt(1 - rho**2) + rho * ndtri(u)))
    g = _generator(spec)
    tu = g.phi(u)
    r0 = np.log(tu)
    target = g.log_dpsi(tu) + np.log(w)
    r = r0.copy()
    lo = r0.copy()
    hi = np.full(r.shape, np.inf)
    done = np.zeros(r.shape, dtype=bool)
    for _ in range(max_iter):
        f = g.log_dpsi(np.exp(r)) - target
        # f > 0 means the root lies to the right
        lo = np.where(f > 0, np.maximum(lo, r), lo)
        hi = np.where(f <= 0, np.minimum(hi, r), hi)
        fp = g.dlog_dpsi_dr(r)
        step = np.clip(-f / fp, -50.0, 50.0)
        new = r + step
        outside = (new <= lo) | (new >= hi)
        bisect = np.where(np.isfinite(hi), 0.5 * (lo + hi), lo + 50.0)
        new = np.where(outside, bisect, new)
        conv = (np.abs(f) <= tol) | (np.abs(new - r) <= 1e-15 * np.maximum(1.0, np.abs(r)))
        done |= conv
        r = np.where(done, r, new)
        if done.all():
            break
    if not done.all():
        raise ConvergenceFailure(f"h_inverse failed to converge for {int((~done).sum())} value(s)")
    # v from phi(v) = s - phi(u), written to avoid cancellation
    tv = tu * np.expm1(r - r0)
    v = g.psi(tv)
    return _out(np.clip(v, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg))


def sample_pair(spec: CopulaSpec, count: int, rng) -> np.ndarray:
    """``count`` pairs from the copula by conditional inversion; returns (count, 2)."""
    rng = np.random.default_rng(rng)
    uw = rng.random((count, 2))
    uw = np.clip(uw, 1e-16, 1 - 1e-16)
    v = h_inverse(spec, uw[:, 0], uw[:, 1])
    return np.column_stack([uw[:, 0], v])


# --------------------------------------------------------------------------
# Dependence measures

def tail_coefficients(spec: CopulaSpec) -> tuple[float, float]:
    """``(lambda_L, lambda_U)``."""
    fam = spec.family
    if fam == "gumbel":
        return 0.0, 2 - 2 ** (1 / spec.params[0])
    if fam == "bb1":
        theta, delta = spec.params
        return 2 ** (-1 / (delta * theta)), 2 - 2 ** (1 / delta)
    return 0.0, 0.0


def kendall_tau(spec: CopulaSpec) -> float:
    fam = spec.family
    if fam == "gaussian":
        return 2 / np.pi * np.arcsin(spec.params[0])
    if fam == "gumbel":
        return 1 - 1 / spec.params[0]
    if fam == "bb1":
        theta, delta = spec.params
        return 1 - 2 / (delta * (theta + 2))
    return 0.0


def spearman_rho(spec: CopulaSpec, nodes: int = 200) -> float:
    """12 * int int C(u, v) du dv - 3 by tensor Gauss-Legendre quadrature."""
    if spec.family == "independence":
        return 0.0
    x, w = leggauss(nodes)
    t = 0.5 * (x + 1)
    w = 0.5 * w
    U, V = np.meshgrid(t, t, indexing="ij")
    C = copula_cdf(spec, U, V)
    return float(12 * (w @ C @ w) - 3)


def quantile_dependence(spec: CopulaSpec, q):
    """Exact lambda^q: C(q,q)/q below 1/2 and (1 - 2q + C(q,q))/(1 - q) above."""
    q = np.asarray(q, dtype=float)
    c = np.asarray(copula_cdf(spec, q, q))
    return _out(np.where(q <= 0.5, c / q, (1 - 2 * q + c) / (1 - q)))


# --------------------------------------------------------------------------
# Estimation

def pseudo_observations(x, y) -> np.ndarray:
    """Scaled ranks rank/(n+1) of each margin, shape (n, 2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    return np.column_stack([stats.rankdata(x) / (n + 1), stats.rankdata(y) / (n + 1)])


def loglik(spec: CopulaSpec, pairs) -> float:
    pairs = np.asarray(pairs, dtype=float)
    return float(np.sum(copula_logpdf(spec, pairs[:, 0], pairs[:, 1])))


def fit_mpl(pairs, family: str, role: str | None = None) -> CopulaSpec:
    """Maximum pseudo-likelihood for Gaussian or Gumbel on rank pairs.

    Starts from Kendall-tau inversion; warns with :class:`BoundaryParameter`
    when the optimum is within 1e-4 of the edge of the parameter domain.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    if pairs.shape[0] < 100:
        raise ValueError("at least 100 pairs are required")
    _check_unit(pairs)
    family = family.lower()
    tau = stats.kendalltau(pairs[:, 0], pairs[:, 1])[0]
    if family == "gaussian":
        lo, hi = -1 + _EPS, 1 - _EPS
        start = float(np.clip(np.sin(np.pi * tau / 2), lo, hi))
        make = lambda par: CopulaSpec("gaussian", (par,), role)  # noqa: E731
        # atanh scale spreads the search near |rho| -> 1
        to_par, from_par = np.tanh, np.arctanh
    elif family == "gumbel":
        lo, hi = 1 + _EPS, GUMBEL_MAX
        start = float(np.clip(1 / (1 - tau) if tau < 1 else hi, lo, hi))
        make = lambda par: CopulaSpec("gumbel", (par,), role)  # noqa: E731
        to_par = lambda z: 1 + np.exp(z)  # noqa: E731
        from_par = lambda p: np.log(p - 1)  # noqa: E731
    else:
        raise ValueError("maximum pseudo-likelihood is implemented for 'gaussian' and 'gumbel'")

    def nll(z):
        par = float(np.clip(to_par(z), lo, hi))
        return -loglik(make(par), pairs)

    zlo, zhi = from_par(lo), from_par(hi)
    res = minimize_scalar(nll, bounds=(zlo, zhi), method="bounded", options={"xatol": 1e-10})
    par = float(np.clip(to_par(res.x), lo, hi))
    if nll(from_par(start)) < -loglik(make(par), pairs):
        par = start
    at_edge = (family == "gumbel" and par - 1 < 1e-4) or (family == "gaussian" and 1 - abs(par) < 1e-4)
    if at_edge or abs(par - hi) < 1e-4 * max(1.0, abs(hi)):
        warnings.warn(f"{family} parameter {par:.6g} at the boundary of its domain", BoundaryParameter, stacklevel=2)
    return make(par)


def bb1_from_tails(lambda_u: float, lambda_l: float, role: str | None = None) -> CopulaSpec:
    """Invert ``lambda_U = 2 - 2^(1/delta)``, ``lambda_L = 2^(-1/(delta theta))``."""
    if not (0 < lambda_u < 1) or not (0 < lambda_l < 1):
        raise TailOutOfRange(f"tail coefficients ({lambda_u}, {lambda_l}) must lie in (0, 1)")
    delta = _LN2 / np.log(2 - lambda_u)
    if delta < 1:
        raise TailOutOfRange(f"implied delta {delta:.4g} < 1")
    theta = _LN2 / (-delta * np.log(lambda_l))
    return CopulaSpec("bb1", (theta, delta), role)


@dataclass(frozen=True, eq=False)
class DependenceDiagnostics:
    q: np.ndarray
    lambda_q: np.ndarray
    lambda_l: float
    lambda_u: float
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    n: int = 0

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({
            "q": self.q,
            "lambda_hat": self.lambda_q,
            "band_lo": self.band_lo if self.band_lo is not None else np.nan,
            "band_hi": self.band_hi if self.band_hi is not None else np.nan,
        })


def fit_bb1_tail_inversion(diag: DependenceDiagnostics, role: str | None = None) -> CopulaSpec:
    return bb1_from_tails(diag.lambda_u, diag.lambda_l, role)


def _lambda_hat(u, v, q):
    """Empirical quantile dependence for every level in ``q`` (vectorised)."""
    n = u.size
    below = (u[:, None] <= q[None, :]) & (v[:, None] <= q[None, :])
    above = (u[:, None] > q[None, :]) & (v[:, None] > q[None, :])
    lower = below.sum(axis=0) / (n * q)
    upper = above.sum(axis=0) / (n * (1 - q))
    return np.where(q <= 0.5, lower, upper)


def _corner_counts(u, v, q):
    """Same as :func:`_lambda_hat` but by sorting; O(n log n) per level set."""
    n = u.size
    out = np.empty(q.size)
    low = q <= 0.5
    if low.any():
        m = np.maximum(u, v)
        ms = np.sort(m)
        out[low] = np.searchsorted(ms, q[low], side="right") / (n * q[low])
    if (~low).any():
        m = np.minimum(u, v)
        ms = np.sort(m)
        out[~low] = (n - np.searchsorted(ms, q[~low], side="right")) / (n * (1 - q[~low]))
    return out


def empirical_dependence(
    pairs,
    q_grid=None,
    tail_q: float = 0.05,
    n_boot: int = 500,
    level: float = 0.90,
    rng=None,
) -> DependenceDiagnostics:
    """Empirical quantile dependence with bootstrap band and averaged tail estimates.

    ``lambda_L`` averages the estimate over ``q`` in [0.01, tail_q] and
    ``lambda_U`` over [1 - tail_q, 0.99], both on a 0.005 grid.
    """
    pairs = np.asarray(pairs, dtype=float)
    u, v = pairs[:, 0], pairs[:, 1]
    n = u.size
    if n < 100:
        raise ValueError("at least 100 pairs are required")
    if q_grid is None:
        q_grid = np.round(np.arange(0.025, 0.9751, 0.005), 6)
    q_grid = np.asarray(q_grid, dtype=float)
    lam = _corner_counts(u, v, q_grid)
    q_low = np.linspace(0.01, tail_q, int(round((tail_q - 0.01) / 0.005)) + 1)
    q_up = np.linspace(1 - tail_q, 0.99, q_low.size)
    lam_l = float(np.mean(_corner_counts(u, v, q_low)))
    lam_u = float(np.mean(_corner_counts(u, v, q_up)))
    band_lo = band_hi = None
    if n_boot:
        rng = np.random.default_rng(rng)
        boots = np.empty((n_boot, q_grid.size))
        for b in range(n_boot):
            idx = rng.integers(0, n, n)
            boots[b] = _corner_counts(u[idx], v[idx], q_grid)
        alpha = (1 - level) / 2
        band_lo = np.minimum(np.quantile(boots, alpha, axis=0), lam)
        band_hi = np.maximum(np.quantile(boots, 1 - alpha, axis=0), lam)
    return DependenceDiagnostics(q_grid, lam, lam_l, lam_u, band_lo, band_hi, n)
