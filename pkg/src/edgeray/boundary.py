"""Flow within the edge boundary and the fiber geometry it induces.

At x = 0 the frame metric is block diagonal, the flow field keeps
(t, x, y) frozen, and the remaining variables split:

  * (z, zeta) undergoes the cogeodesic flow of the fiber cometric
    K(y) = kzz(0, y, .)^{-1}, so m = |zeta|_K is constant and the fiber
    arc advances at rate m;
  * the scalar part closes up:  tau' = tau*xi,  eta' = eta*xi,
    xi' = xi^2 + m^2, solved by

        xi(s)  = m tan(m s + C),        C = arctan(xi0 / m),
        tau(s) = tau0 cos(C) sec(m s + C),
        eta(s) = eta0 cos(C) sec(m s + C).

The maximal interval has m s + C in (-pi/2, pi/2), so a complete
boundary trajectory sweeps total fiber arc exactly pi between its two
blowup ends.  That arc-pi law is what makes two edge points geometric
partners exactly when some unit-speed fiber geodesic of length pi joins
them.

The fiber limit map sends a non-radial phase point to the fiber point
reached from z by the unit geodesic in direction K zeta / |zeta|_K
after the signed arc

    ell = arctan(|zeta|_K / xi),

constant along the flow over the boundary on either side of the closest
approach and continuous across zeta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import FlowEscapedError, IntegrationDivergedError
from .phase import EdgePhasePoint

_GEO_RTOL = 1e-11
_GEO_ATOL = 1e-13


def fiber_norm(spec, y, z, zeta):
    """|zeta|_K with K the fiber cometric at (0, y, z)."""
    K = spec.evaluator().fiber_cometric(y, z)
    return math.sqrt(max(float(zeta @ K @ zeta), 0.0))


def fiber_unit_covector(spec, y, z, direction):
    """Covector zeta with |zeta|_K = 1 generating fiber velocity direction."""
    ev = spec.evaluator()
    kzz = ev.kzz.value(0.0, np.asarray(y, float), np.asarray(z, float))
    w = np.asarray(direction, float)
    speed = math.sqrt(float(w @ kzz @ w))
    if speed == 0.0:
        raise ValueError("zero fiber direction")
    return (kzz @ w) / speed


def _cogeodesic_rhs(ev, y):
    b, f = ev.b, ev.f

    def rhs(s, state):
        z = state[:f]
        zeta = state[f:]
        K = ev.fiber_cometric(y, z)
        w = K @ zeta
        dzeta = np.empty(f)
        for a in range(f):
            dk = ev.kzz.deriv(1 + b + a, 0.0, y, z)
            dzeta[a] = 0.5 * float(w @ dk @ w)
        return np.concatenate((w, dzeta))

    return rhs


def fiber_cogeodesic_flow(spec, y, z0, zeta0, s_values):
    """Cogeodesic flow of the fiber cometric; returns (z, zeta) samples.

    The parameter matches the boundary flow parameter: the fiber arc
    advances at the constant rate |zeta0|_K.
    """
    y = np.atleast_1d(np.asarray(y, float))
    z0 = np.atleast_1d(np.asarray(z0, float))
    zeta0 = np.atleast_1d(np.asarray(zeta0, float))
    s_values = np.atleast_1d(np.asarray(s_values, float))
    ev = spec.evaluator()
    f = spec.f
    order = np.argsort(s_values)
    zs = np.empty((len(s_values), f))
    zetas = np.empty((len(s_values), f))
    rhs = _cogeodesic_rhs(ev, y)
    state0 = np.concatenate((z0, zeta0))
    for sign in (-1.0, 1.0):
        sel = [i for i in order if (s_values[i] < 0) == (sign < 0)]
        if not sel:
            continue
        targets = sorted(abs(s_values[i]) for i in sel)
        span = targets[-1]
        if span == 0.0:
            for i in sel:
                zs[i], zetas[i] = z0, zeta0
            continue
        sol = solve_ivp(lambda s, st: sign * rhs(s, st), (0.0, span), state0,
                        method="RK45", rtol=_GEO_RTOL, atol=_GEO_ATOL,
                        dense_output=True)
        if sol.status != 0:
            raise IntegrationDivergedError("fiber geodesic integration "
                                           "failed: %s" % sol.message)
        for i in sel:
            st = sol.sol(abs(s_values[i]))
            zs[i], zetas[i] = st[:f], st[f:]
    return zs, zetas


def fiber_geodesic_point(spec, y, z0, direction, arc):
    """Endpoint of the unit-speed fiber geodesic from z0 after signed arc."""
    zeta0 = fiber_unit_covector(spec, y, z0, direction)
    zs, _ = fiber_cogeodesic_flow(spec, y, z0, zeta0, [arc])
    return zs[0]


@dataclass(frozen=True)
class FiberState:
    """A unit-speed fiber geodesic state over base point y."""

    y: np.ndarray
    z: np.ndarray
    v: np.ndarray          # velocity, |v|_k = 1
    speed: float           # conserved |zeta|_K of the generating covector

    def unit_defect(self, spec):
        kzz = spec.evaluator().kzz.value(0.0, self.y, self.z)
        return abs(math.sqrt(float(self.v @ kzz @ self.v)) - 1.0)


def fiber_geodesic(spec, y, z0, v0, length):
    """Unit-speed geodesic of the fiber metric k(0, y, .) after arc length.

    v0 is normalized to unit k-speed; raises FlowEscapedError when a
    chart-only fiber trajectory leaves the chart box.
    """
    y = np.atleast_1d(np.asarray(y, float))
    zeta0 = fiber_unit_covector(spec, y, z0, v0)
    zs, zetas = fiber_cogeodesic_flow(spec, y, z0, zeta0, [length])
    z, zeta = zs[0], zetas[0]
    if spec.fiber.kind == "chart":
        for a, (lo, hi) in enumerate(spec.z_box):
            slack = max(hi - lo, 1.0)
            if not lo - slack <= z[a] <= hi + slack:
                raise FlowEscapedError("fiber geodesic left the chart box "
                                       "in coordinate z%d" % (a + 1))
    K = spec.evaluator().fiber_cometric(y, z)
    return FiberState(y=y, z=z, v=K @ zeta, speed=1.0)


def fiber_circumference(spec, y, samples=None):
    """Total length of an f = 1 periodic fiber (None when not closed)."""
    if spec.f != 1:
        raise ValueError("circumference is defined for one-dimensional fibers")
    period = spec.fiber.periods[0]
    if period is None:
        return None
    y = np.atleast_1d(np.asarray(y, float))
    ev = spec.evaluator()

    def speed(zc):
        return math.sqrt(ev.kzz.value(0.0, y, np.array([zc]))[0, 0])

    total, _ = quad(speed, 0.0, period, limit=200)
    return total


# --- the boundary flow itself -------------------------------------------

def _scalar_constants(xi0, m):
    if m == 0.0:
        return None
    return math.atan2(xi0, m)


@dataclass(frozen=True)
class BoundaryFlowConstants:
    """Constants of the closed-form scalar boundary flow through q.

    tau(s) = A sec(m s + C), eta_i(s) = B_i sec(m s + C),
    xi(s) = m tan(m s + C), with m = |zeta|_K conserved.
    """

    m: float
    C: float
    A: float
    B: np.ndarray


def boundary_flow_constants(spec, q):
    m = fiber_norm(spec, q.y, q.z, q.zeta)
    if m == 0.0:
        raise ValueError("closed-form constants need |zeta|_K > 0")
    C = _scalar_constants(q.xi, m)
    return BoundaryFlowConstants(m=m, C=C, A=q.tau * math.cos(C),
                                 B=q.eta * math.cos(C))


def boundary_maximal_interval(spec, q):
    """Open parameter interval of the boundary flow through q (x = 0)."""
    m = fiber_norm(spec, q.y, q.z, q.zeta)
    if m == 0.0:
        if q.xi == 0.0:
            return (-math.inf, math.inf)
        bound = 1.0 / q.xi
        return (bound, math.inf) if q.xi < 0.0 else (-math.inf, bound)
    C = _scalar_constants(q.xi, m)
    return ((-0.5 * math.pi - C) / m, (0.5 * math.pi - C) / m)


def boundary_flow(spec, q, s):
    """Flow q (with q.x = 0) for parameter s along the boundary field.

    (t, x, y) stay frozen; (z, zeta) follow the fiber cogeodesic flow;
    (tau, xi, eta) follow the secant/tangent closed form.  Raises
    FlowEscapedError when s is outside the maximal interval.
    """
    if q.x != 0.0:
        raise ValueError("boundary flow requires x = 0")
    lo, hi = boundary_maximal_interval(spec, q)
    if not lo < s < hi:
        raise FlowEscapedError("parameter %.6g outside maximal interval "
                               "(%.6g, %.6g)" % (s, lo, hi))
    m = fiber_norm(spec, q.y, q.z, q.zeta)
    if m == 0.0:
        factor = 1.0 / (1.0 - q.xi * s)
        return EdgePhasePoint(t=q.t, x=0.0, y=q.y.copy(), z=q.z.copy(),
                              tau=q.tau * factor, xi=q.xi * factor,
                              eta=q.eta * factor, zeta=q.zeta.copy())
    C = _scalar_constants(q.xi, m)
    phase = m * s + C
    stretch = 1.0 / (math.cos(phase) / math.cos(C))
    zs, zetas = fiber_cogeodesic_flow(spec, q.y, q.z, q.zeta, [s])
    return EdgePhasePoint(t=q.t, x=0.0, y=q.y.copy(), z=zs[0],
                          tau=q.tau * stretch, xi=m * math.tan(phase),
                          eta=q.eta * stretch, zeta=zetas[0])


def boundary_arc_swept(spec, q, s):
    """Fiber arc length swept by the boundary flow from q over [0, s]."""
    return fiber_norm(spec, q.y, q.z, q.zeta) * s


# --- fiber limit map ----------------------------------------------------

def fiber_limit_point(spec, q):
    """Limiting fiber position of the ray through q at the edge.

    Defined away from radial directions: (xi, zeta) != 0.  For
    zeta = 0 this is z itself; otherwise the unit geodesic from z in
    direction K zeta / m, followed for the signed arc arctan(m / xi),
    with m = |zeta|_K.  Constant along the flow on either side of the
    closest approach (exactly at x = 0, to first order in x nearby).
    """
    m = fiber_norm(spec, q.y, q.z, q.zeta)
    if m == 0.0:
        if q.xi == 0.0:
            raise ValueError("fiber limit undefined on radial directions")
        return q.z.copy()
    if q.xi == 0.0:
        arc = 0.5 * math.pi
    else:
        arc = math.atan(m / q.xi)
    zs, _ = fiber_cogeodesic_flow(spec, q.y, q.z, q.zeta / m, [arc])
    return zs[0]


# --- geometric partners -------------------------------------------------

@dataclass(frozen=True)
class PartnerResult:
    related: bool
    distance: float       # defect of the best arc-pi geodesic endpoint
    direction: np.ndarray


def _direction_grid(f, n):
    if f == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if f == 2:
        angles = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
        return [np.array([math.cos(a), math.sin(a)]) for a in angles]
    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(n, f))
    return [d / np.linalg.norm(d) for d in dirs]


def geometric_partners(spec, y, z_bar, n_directions=None, dedup_tol=1e-6):
    """Fiber points at unit-speed geodesic distance exactly pi from z_bar.

    Samples initial directions, flows each geodesic to arc pi, wraps
    periodic coordinates and deduplicates.  For one-dimensional fibers
    the two orientations are used directly.
    """
    if n_directions is None:
        n_directions = 2 if spec.f == 1 else 64
    y = np.atleast_1d(np.asarray(y, float))
    z_bar = np.atleast_1d(np.asarray(z_bar, float))
    out = []
    for direction in _direction_grid(spec.f, n_directions):
        z_end = spec.fiber.wrap(fiber_geodesic_point(spec, y, z_bar,
                                                     direction, math.pi))
        if not any(np.max(np.abs(spec.fiber.coordinate_delta(z_end, seen)))
                   < dedup_tol for seen in out):
            out.append(z_end)
    return out


def is_geometrically_related(spec, y, z1, z2, tol=1e-6, n_directions=None):
    """Whether a unit-speed fiber geodesic of arc pi joins z1 to z2.

    Shoots geodesics over a direction grid and refines the best
    candidate by golden-section search on the launch angle (trivial for
    one-dimensional fibers).  The distance reported is the coordinate
    defect of the best endpoint.
    """
    y = np.atleast_1d(np.asarray(y, float))
    z1 = np.atleast_1d(np.asarray(z1, float))
    z2 = np.atleast_1d(np.asarray(z2, float))

    def defect_of(z_end):
        return float(np.linalg.norm(spec.fiber.coordinate_delta(z_end, z2)))

    if spec.f == 1:
        best = (math.inf, np.array([1.0]))
        for direction in _direction_grid(1, 2):
            d = defect_of(fiber_geodesic_point(spec, y, z1, direction,
                                               math.pi))
            if d < best[0]:
                best = (d, direction)
        return PartnerResult(best[0] <= tol, best[0], best[1])

    if n_directions is None:
        n_directions = 64

    def defect_angle(a):
        direction = np.zeros(spec.f)
        direction[0], direction[1] = math.cos(a), math.sin(a)
        return defect_of(fiber_geodesic_point(spec, y, z1, direction,
                                              math.pi))

    angles = (np.arange(n_directions) + 0.5) * (2.0 * math.pi / n_directions)
    defects = [defect_angle(a) for a in angles]
    i0 = int(np.argmin(defects))
    lo = angles[i0] - 2.0 * math.pi / n_directions
    hi = angles[i0] + 2.0 * math.pi / n_directions
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, bnd = lo, hi
    c = bnd - invphi * (bnd - a)
    d = a + invphi * (bnd - a)
    fc, fd = defect_angle(c), defect_angle(d)
    for _ in range(60):
        if fc < fd:
            bnd, d, fd = d, c, fc
            c = bnd - invphi * (bnd - a)
            fc = defect_angle(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (bnd - a)
            fd = defect_angle(d)
    a_best = 0.5 * (a + bnd)
    best = defect_angle(a_best)
    direction = np.zeros(spec.f)
    direction[0], direction[1] = math.cos(a_best), math.sin(a_best)
    return PartnerResult(best <= tol, best, direction)
