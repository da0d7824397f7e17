"""Bicharacteristic flow of the wave symbol in edge coordinates.

With p = tau^2 - u.G^{-1}(x,y,z).u, u = (xi, eta, zeta), the flow field
used throughout is the rescale H = -(x^2/2) * (Hamilton field of p/x^2),
which extends smoothly to x = 0.  Writing w = G^{-1} u it reads

    dt/ds    = -tau*x
    dx/ds    = x*w_xi                 dtau/ds  = tau*w_xi
    dy/ds    = x*w_eta                dxi/ds   = -p + tau^2 - eta.w_eta
                                                 + (x/2) w.dG/dx.w
    dz/ds    = w_zeta                 deta/ds  = eta*w_xi + (x/2) w.dG/dy.w
                                      dzeta/ds = (1/2) w.dG/dz.w

Along integral curves p and tau/x are conserved and t is monotone with
dt/ds = -tau*x, so the physical time direction corresponds to the flow
direction -sgn(tau).

The unit-gauge version divides the covector by |tau| (hatted variables,
sigma = 1/|tau|) and rescales time by sigma; it vanishes exactly at
x = 0, zeta_hat = 0, sigma = 0 on the characteristic set (radial
points), where its linearization has eigenvalues -xi_hat, 0, +xi_hat.

Numerical integration further rescales the field by 1/(x|tau|), a
positive factor that leaves trajectories unchanged while making the
parameter advance at unit speed in t; the approach to the boundary then
costs a bounded parameter interval instead of slowing down
algebraically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import expr as ex
from .errors import (IllConditionedEventError, IntegrationDivergedError,
                     LaunchFailedError, StepLimitError)
from .metric import transverse_momentum
from .phase import CospherePoint, EdgePhasePoint


@dataclass(frozen=True)
class FlowSettings:
    """Numerical knobs shared by the integrators and the event machinery."""

    rtol: float = 1e-10
    atol: float = 1e-12
    x_stop: float = 1e-4
    eps_launch: float = 1e-3
    p_drift_max: float = 1e-6
    max_steps: int = 500000
    tol_g: float = 1e-9
    branch_budget: int = 64
    dedup_tol: float = 1e-6
    fd_step: float = 1e-6
    event_fit_tol: float = 1e-5
    glancing_xi: float = 1e-6
    seed: int = 0


class Termination(enum.Enum):
    BOUNDARY_APPROACH = "BoundaryApproach"
    TIME_LIMIT = "TimeLimit"
    CHART_EXIT = "ChartExit"
    STEP_LIMIT = "StepLimit"


class RayEnd(enum.Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"


def hamilton_field(spec, q):
    """Field value at an edge phase point, ordered like q.to_vector()."""
    ev = spec.evaluator()
    return _field_vector(ev, q.to_vector())


def _field_vector(ev, vec):
    b, f = ev.b, ev.f
    x = vec[1]
    y = vec[2:2 + b]
    z = vec[2 + b:2 + b + f]
    itau = 2 + b + f
    tau = vec[itau]
    u = vec[itau + 1:]
    G = ev.edge_matrix(x, y, z)
    dG = ev.edge_matrix_derivs(x, y, z)
    w = np.linalg.solve(G, u)
    p = tau * tau - float(u @ w)
    w_xi = w[0]
    w_eta = w[1:1 + b]
    w_zeta = w[1 + b:]
    quad = np.einsum("i,vij,j->v", w, dG, w)
    out = np.empty_like(vec)
    out[0] = -tau * x
    out[1] = x * w_xi
    out[2:2 + b] = x * w_eta
    out[2 + b:itau] = w_zeta
    out[itau] = tau * w_xi
    eta = u[1:1 + b]
    out[itau + 1] = -p + tau * tau - float(eta @ w_eta) + 0.5 * x * quad[0]
    out[itau + 2:itau + 2 + b] = eta * w_xi + 0.5 * x * quad[1:1 + b]
    out[itau + 2 + b:] = 0.5 * quad[1 + b:]
    return out


def rescaled_field(spec, q):
    """Unit-gauge field at a CospherePoint, ordered like q.to_vector().

    Equals sigma times the push-forward of hamilton_field under the
    gauge change wherever both are defined, and vanishes identically at
    radial points (x = 0, zeta_hat = 0, sigma = 0 on the characteristic
    set).
    """
    ev = spec.evaluator()
    return _rescaled_vector(ev, q.to_vector(), q.sgn_tau)


def _rescaled_vector(ev, vec, sgn_tau):
    b, f = ev.b, ev.f
    x = vec[1]
    y = vec[2:2 + b]
    z = vec[2 + b:2 + b + f]
    isig = 2 + b + f
    sigma = vec[isig]
    u = vec[isig + 1:]
    G = ev.edge_matrix(x, y, z)
    dG = ev.edge_matrix_derivs(x, y, z)
    w = np.linalg.solve(G, u)
    p_hat = 1.0 - float(u @ w)
    w_xi = w[0]
    w_eta = w[1:1 + b]
    w_zeta = w[1 + b:]
    quad = np.einsum("i,vij,j->v", w, dG, w)
    eta_hat = u[1:1 + b]
    zeta_hat = u[1 + b:]
    out = np.empty_like(vec)
    out[0] = -sgn_tau * x
    out[1] = x * w_xi
    out[2:2 + b] = x * w_eta
    out[2 + b:isig] = w_zeta
    out[isig] = -sigma * w_xi
    out[isig + 1] = (-p_hat + 1.0 - float(eta_hat @ w_eta)
                     + 0.5 * x * quad[0] - vec[isig + 1] * w_xi)
    out[isig + 2:isig + 2 + b] = 0.5 * x * quad[1:1 + b]
    out[isig + 2 + b:] = 0.5 * quad[1 + b:] - zeta_hat * w_xi
    return out


def product_hamilton_field(spec, q):
    """Closed-form field for true product metrics dx^2 + h(y) + x^2 k(y,z).

    Serves as an independent cross-check of hamilton_field; raises
    ValueError when the spec has h', kyy, kyz terms or x-dependent blocks.
    """
    zero = ex.Num(0.0)
    extra = [entry for mat in (spec.hprime, spec.kyy, spec.kyz)
             for row in mat for entry in row if entry != zero]
    if extra:
        raise ValueError("not a product metric: correction blocks present")
    for mat in (spec.h, spec.k):
        for row in mat:
            for entry in row:
                if "x" in ex.free_vars(entry):
                    raise ValueError("not a product metric: x-dependent block")
    ev = spec.evaluator()
    b, f = spec.b, spec.f
    h = ev.h.value(0.0, q.y, q.z) if b else np.zeros((0, 0))
    kzz = ev.kzz.value(0.0, q.y, q.z)
    H = np.linalg.inv(h) if b else h
    K = np.linalg.inv(kzz)
    Heta = H @ q.eta
    Kzeta = K @ q.zeta
    dy = np.empty(b)
    deta = np.empty(b)
    for i in range(b):
        dh = ev.h.deriv(1 + i, 0.0, q.y, q.z)
        dk = ev.kzz.deriv(1 + i, 0.0, q.y, q.z)
        dy[i] = q.x * Heta[i]
        deta[i] = (q.xi * q.eta[i]
                   + 0.5 * q.x * (float(Heta @ dh @ Heta)
                                  + float(Kzeta @ dk @ Kzeta)))
    dzeta = np.empty(f)
    for a in range(f):
        dk = ev.kzz.deriv(1 + b + a, 0.0, q.y, q.z)
        dzeta[a] = 0.5 * float(Kzeta @ dk @ Kzeta)
    out = np.concatenate((
        [-q.tau * q.x, q.xi * q.x], dy, K @ q.zeta,
        [q.tau * q.xi, q.xi ** 2 + float(q.zeta @ Kzeta)], deta, dzeta))
    return out


@dataclass
class RaySegment:
    """One interior integration: samples, termination, conserved checks."""

    spec: object
    direction: int
    s: np.ndarray               # flow parameter, |dt/ds| = 1, from 0
    states: np.ndarray          # (n, 2*(2+b+f)) rows in to_vector order
    termination: Termination
    dense: object = None        # scipy OdeSolution over the raw parameter
    nfev: int = 0

    def point(self, i):
        return EdgePhasePoint.from_vector(self.states[i], self.spec.b,
                                          self.spec.f)

    def end_point(self):
        return self.point(len(self.s) - 1)

    def start_point(self):
        return self.point(0)

    @property
    def x(self):
        return self.states[:, 1]

    @property
    def t(self):
        return self.states[:, 0]

    def conserved_log(self):
        """Per-sample (p, p/tau^2, tau/x, |tau|)."""
        b, f = self.spec.b, self.spec.f
        ev = self.spec.evaluator()
        itau = 2 + b + f
        p = np.empty(len(self.s))
        for i, row in enumerate(self.states):
            G = ev.edge_matrix(row[1], row[2:2 + b], row[2 + b:itau])
            u = row[itau + 1:]
            p[i] = row[itau] ** 2 - float(u @ np.linalg.solve(G, u))
        tau = self.states[:, itau]
        return {
            "p": p,
            "p_rel": p / tau ** 2,
            "tau_over_x": tau / self.states[:, 1],
            "abs_tau": np.abs(tau),
        }

    def state_at(self, s):
        """Dense-output state lookup at raw parameter value s."""
        return self.dense(s)


def integrate_interior(spec, q0, direction, settings=None, s_max=10.0,
                       x_stop=None, check_drift=True):
    """Integrate the flow from q0 with the unit-|dt| parametrization.

    direction multiplies the field; the parameter s then advances t at
    rate -direction*sgn(tau).  Terminates on reaching x_stop from above
    (BoundaryApproach), on exhausting s_max (TimeLimit), or on leaving
    the fiber chart for chart-only fiber topologies (ChartExit).
    """
    if settings is None:
        settings = FlowSettings()
    if x_stop is None:
        x_stop = settings.x_stop
    if q0.x <= x_stop:
        raise ValueError("initial point must start above x_stop")
    if q0.tau == 0.0:
        raise ValueError("tau must be nonzero along light rays")
    ev = spec.evaluator()
    itau = 2 + spec.b + spec.f

    def rhs(s, vec):
        field = _field_vector(ev, vec)
        scale = direction / (vec[1] * abs(vec[itau]))
        return field * scale

    def hit_boundary(s, vec):
        return vec[1] - x_stop
    hit_boundary.terminal = True
    hit_boundary.direction = -1

    events = [hit_boundary]
    chart_exit = None
    if spec.fiber.kind == "chart":
        lo = np.array([box[0] for box in spec.z_box])
        hi = np.array([box[1] for box in spec.z_box])

        def chart_exit(s, vec):
            z = vec[2 + spec.b:itau]
            over = np.maximum(z - hi, lo - z)
            return -float(over.max())
        chart_exit.terminal = True
        events.append(chart_exit)

    sol = solve_ivp(rhs, (0.0, s_max), q0.to_vector(), method="RK45",
                    rtol=settings.rtol, atol=settings.atol,
                    dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationDivergedError("integrator failed: %s" % sol.message)
    if sol.nfev > settings.max_steps:
        raise StepLimitError("integration used %d evaluations (budget %d)"
                             % (sol.nfev, settings.max_steps))
    if sol.status == 1:
        if len(sol.t_events[0]):
            termination = Termination.BOUNDARY_APPROACH
        else:
            termination = Termination.CHART_EXIT
    else:
        termination = Termination.TIME_LIMIT
    segment = RaySegment(spec=spec, direction=direction, s=sol.t.copy(),
                         states=sol.y.T.copy(), termination=termination,
                         dense=sol.sol, nfev=sol.nfev)
    if check_drift:
        rel = np.abs(segment.conserved_log()["p_rel"])
        if rel.max() > settings.p_drift_max:
            raise IntegrationDivergedError(
                "characteristic drift |p|/tau^2 = %.3g exceeds %.1g"
                % (rel.max(), settings.p_drift_max))
    return segment


# --- radial-point linearization ----------------------------------------

@dataclass(frozen=True)
class LinearizationResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray       # sorted real parts
    xi_hat: float
    counts: dict                  # multiplicities at -xi_hat, 0, +xi_hat
    max_residual: float           # worst distance to the expected set
    max_imag: float


def linearization_at_radial(spec, q, step=None):
    """Finite-difference Jacobian of the unit-gauge field at a radial point.

    The spectrum consists of -xi_hat (multiplicity 1 + f, covering the
    scale direction and the fiber covector), 0 (multiplicity 2b + f + 2),
    and +xi_hat (multiplicity 1, the normal direction).
    """
    if step is None:
        step = FlowSettings().fd_step
    ev = spec.evaluator()
    vec = q.to_vector()
    n = len(vec)
    L = np.empty((n, n))
    for j in range(n):
        vp = vec.copy()
        vm = vec.copy()
        vp[j] += step
        vm[j] -= step
        L[:, j] = (_rescaled_vector(ev, vp, q.sgn_tau)
                   - _rescaled_vector(ev, vm, q.sgn_tau)) / (2.0 * step)
    eig = np.linalg.eigvals(L)
    order = np.argsort(eig.real)
    eig = eig[order]
    targets = np.array([-q.xi_hat, 0.0, q.xi_hat])
    dist = np.abs(eig.real[:, None] - targets[None, :])
    nearest = dist.argmin(axis=1)
    counts = {"-xi_hat": int((nearest == 0).sum()),
              "0": int((nearest == 1).sum()),
              "+xi_hat": int((nearest == 2).sum())}
    return LinearizationResult(
        matrix=L,
        eigenvalues=eig.real,
        xi_hat=q.xi_hat,
        counts=counts,
        max_residual=float(dist.min(axis=1).max()),
        max_imag=float(np.abs(eig.imag).max()))


# --- launching rays from boundary data ---------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """Slow data of a ray endpoint on the edge, in the unit gauge."""

    t_bar: float
    y_bar: np.ndarray
    z_bar: np.ndarray
    sgn_tau: int
    xi_hat: float          # signed; sgn(xi_hat) = +sgn_tau on incoming rays
    eta_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_bar",
                           np.atleast_1d(np.asarray(self.y_bar, float)))
        object.__setattr__(self, "z_bar",
                           np.atleast_1d(np.asarray(self.z_bar, float)))
        object.__setattr__(self, "eta_hat",
                           np.atleast_1d(np.asarray(self.eta_hat, float)))

    @property
    def io(self):
        return (RayEnd.INCOMING if self.xi_hat * self.sgn_tau > 0
                else RayEnd.OUTGOING)


def first_order_boundary_readoff(spec, q, io):
    """Leading-order boundary data of the ray through a near-edge point q.

    The fiber point is estimated through the fiber limit map, which
    absorbs the residual fiber arc of the spiral; without it the
    estimate would trail the limit by the arctan(|zeta|/xi) arc.
    """
    from .boundary import fiber_limit_point
    scale = abs(q.tau)
    xi_hat = q.xi / scale
    eta_hat = q.eta / scale
    H = spec.evaluator().base_cometric(q.y)
    sgn_io = 1.0 if io == RayEnd.INCOMING else -1.0
    dt = sgn_io * q.x / abs(xi_hat)
    t_bar = q.t + dt
    sgn_tau = 1 if q.tau > 0 else -1
    y_bar = q.y + dt * (-(H @ eta_hat) / sgn_tau) if spec.b else q.y.copy()
    z_bar = fiber_limit_point(spec, q)
    return BoundaryData(t_bar=t_bar, y_bar=y_bar, z_bar=z_bar,
                        sgn_tau=sgn_tau, xi_hat=xi_hat, eta_hat=eta_hat)


def _seed_from_data(spec, data, io, eps):
    sgn_io = 1.0 if io == RayEnd.INCOMING else -1.0
    abs_xi = abs(data.xi_hat)
    t_seed = data.t_bar - sgn_io * eps / abs_xi
    H = spec.evaluator().base_cometric(data.y_bar)
    if spec.b:
        dydt = -(H @ data.eta_hat) / data.sgn_tau
        y_seed = data.y_bar + (t_seed - data.t_bar) * dydt
    else:
        y_seed = data.y_bar.copy()
    zeta = np.zeros(spec.f)
    try:
        xi = transverse_momentum(spec, eps, y_seed, data.z_bar,
                                 float(data.sgn_tau), data.eta_hat, zeta,
                                 sign=math.copysign(1.0, data.xi_hat))
    except ValueError as err:
        raise LaunchFailedError(str(err))
    return EdgePhasePoint(t=t_seed, x=eps, y=y_seed, z=data.z_bar.copy(),
                          tau=float(data.sgn_tau), xi=xi,
                          eta=data.eta_hat.copy(), zeta=zeta)


def stable_manifold_launch(spec, data, io=None, settings=None, newton=True):
    """Interior seed at x = eps_launch on the ray with the given edge data.

    The seed is built from the leading asymptotics (zeta_hat = O(x),
    xi solved exactly from p = 0) and improved by one Newton correction:
    the seed is integrated toward the boundary, its leading-order
    boundary data are read off, and the position defect is subtracted.
    Set newton=False for grazing data, where the probe geometry
    degenerates and the leading-order seed is used as is.
    """
    if settings is None:
        settings = FlowSettings()
    if io is None:
        io = data.io
    if data.xi_hat == 0.0:
        raise LaunchFailedError("xi_hat = 0: glancing data cannot seed a "
                                "transversal ray")
    want = 1 if io == RayEnd.INCOMING else -1
    if int(math.copysign(1, data.xi_hat)) * data.sgn_tau != want:
        raise LaunchFailedError("sgn(xi_hat * tau) inconsistent with %s ray"
                                % io.value)
    eps = settings.eps_launch
    seed = _seed_from_data(spec, data, io, eps)
    if not newton:
        return seed
    # Newton pass: probe toward the edge, extrapolate the limiting data
    # of the seeded ray, and subtract the measured position defect.
    from .gbb import backward_event
    try:
        readoff = backward_event(spec, seed, settings).data()
    except (IntegrationDivergedError, IllConditionedEventError,
            StepLimitError) as err:
        raise LaunchFailedError("seed probe failed: %s" % err)
    dt = readoff.t_bar - data.t_bar
    dy = readoff.y_bar - data.y_bar
    dz = spec.fiber.coordinate_delta(readoff.z_bar, data.z_bar)
    corrected = replace(seed, t=seed.t - dt, y=seed.y - dy, z=seed.z - dz)
    try:
        xi = transverse_momentum(spec, corrected.x, corrected.y, corrected.z,
                                 corrected.tau, corrected.eta, corrected.zeta,
                                 sign=math.copysign(1.0, data.xi_hat))
    except ValueError as err:
        raise LaunchFailedError(str(err))
    return replace(corrected, xi=xi)
