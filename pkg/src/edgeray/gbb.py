"""Broken bicharacteristics: boundary events, branching, path assembly.

An interior ray that reaches the boundary-approach threshold is
extrapolated to x = 0 on a geometric ladder of cross sections (a
Richardson-style polynomial fit in x), producing the slow data
(t_bar, y_bar, sgn tau, xi_hat, eta_hat) and the limiting fiber point
z_bar from the fiber limit map.  Hyperbolic events (|eta_hat|_h < 1)
branch into outgoing rays sharing the slow data with the magnitude of
xi_hat preserved and its sign flipped to the outgoing convention; the
fiber point of each outgoing branch depends on the policy:

  * same_fiber    -- the diffracted ray at z_bar itself;
  * geometric     -- the endpoints of fiber geodesics of arc pi from
                     z_bar (geometric continuations);
  * fan(n)        -- n fiber points sampled uniformly over the fiber
                     (the whole diffracted front), anchored at z_bar.

Glancing events (|eta_hat|_h = 1) continue along the tangential flow
d/dt - (geodesic flow of h(0,y) on the unit base cosphere), then
re-enter the interior with an infinitesimal outgoing xi_hat.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .boundary import fiber_limit_point, geometric_partners
from .errors import ConfigError, IllConditionedEventError, LaunchFailedError
from .hamiltonian import (BoundaryData, FlowSettings, RayEnd, Termination,
                          integrate_interior, stable_manifold_launch)
from .phase import (BoundaryClass, EdgePhasePoint, classify_boundary,
                    normalize_cosphere)

N_LADDER = 7
LADDER_RATIO = 1.6


class BranchKind:
    INCIDENT = "incident"
    DIFFRACTED = "diffracted"
    GEOMETRIC = "geometric"
    GLANCING = "glancing"


@dataclass(frozen=True)
class BranchPolicy:
    """How hyperbolic events branch: same_fiber | geometric | fan(n)."""

    kind: str
    n: int = 0

    @staticmethod
    def parse(text):
        text = str(text).strip()
        if text in ("same_fiber", "geometric"):
            return BranchPolicy(text)
        match = re.fullmatch(r"fan\((\d+)\)", text)
        if match:
            n = int(match.group(1))
            if n < 1:
                raise ConfigError("fan size must be at least 1")
            return BranchPolicy("fan", n)
        raise ConfigError("unknown branch policy %r" % text)

    def __str__(self):
        return "fan(%d)" % self.n if self.kind == "fan" else self.kind


SAME_FIBER = BranchPolicy("same_fiber")
GEOMETRIC_ONLY = BranchPolicy("geometric")


def fan(n):
    return BranchPolicy("fan", n)


@dataclass(frozen=True)
class BoundaryEvent:
    """Extrapolated data of a boundary interaction."""

    branch_id: str
    boundary_class: BoundaryClass
    t_bar: float
    y_bar: np.ndarray
    z_bar: np.ndarray
    sgn_tau: int
    xi_hat: float            # incoming-signed: sgn(xi_hat) = sgn_tau
    eta_hat: np.ndarray
    margin: float            # 1 - |eta_hat|^2 in the base cometric
    char_defect: float       # |xi_hat^2 + |eta_hat|^2 - 1|
    residual: float          # worst extrapolation-fit residual

    def data(self):
        return BoundaryData(t_bar=self.t_bar, y_bar=self.y_bar,
                            z_bar=self.z_bar, sgn_tau=self.sgn_tau,
                            xi_hat=self.xi_hat, eta_hat=self.eta_hat)


def _ladder_parameters(segment):
    """Parameter values of the final monotone descent crossing the ladder."""
    x = segment.x
    s = segment.s
    end = len(x) - 1
    top = end
    while top > 0 and x[top - 1] > x[top]:
        top -= 1
    x_end = x[end]
    x_avail = 0.95 * x[top]
    if x_avail / x_end < 1.2:
        raise IllConditionedEventError(
            "segment descends only by factor %.3g before the boundary "
            "threshold; no room to extrapolate" % (x[top] / x_end))
    ratio = min(LADDER_RATIO, (x_avail / x_end) ** (1.0 / (N_LADDER - 1)))
    rungs = x_end * ratio ** np.arange(N_LADDER)
    dense = segment.dense
    out = [s[end]]
    for xj in rungs[1:]:
        lo, hi = s[top], s[end]
        out.append(brentq(lambda u: dense(u)[1] - xj, lo, hi,
                          xtol=1e-14, rtol=1e-15))
    return np.array(out), rungs


def _extrapolate(xs, values, scale):
    """Quadratic fit in x through the ladder, evaluated at x = 0."""
    coeffs = np.polynomial.polynomial.polyfit(xs / xs[0], values, 2)
    fit = np.polynomial.polynomial.polyval(xs / xs[0], coeffs)
    residual = float(np.max(np.abs(fit - values))) / max(1.0, abs(scale))
    return coeffs[0], residual


def detect_boundary_event(spec, segment, settings=None, branch_id="0"):
    """Extrapolate a boundary-approaching segment to x = 0 and classify.

    Raises IllConditionedEventError when the fit residuals exceed the
    tolerance or the extrapolated data are off the characteristic set.
    """
    if settings is None:
        settings = FlowSettings()
    if segment.termination != Termination.BOUNDARY_APPROACH:
        raise ValueError("event detection requires a BoundaryApproach "
                         "segment, got %s" % segment.termination.value)
    b, f = spec.b, spec.f
    itau = 2 + b + f
    s_ladder, x_ladder = _ladder_parameters(segment)
    states = np.array([segment.dense(s) for s in s_ladder])
    abs_tau = np.abs(states[:, itau])
    t_seq = states[:, 0]
    y_seq = states[:, 2:2 + b]
    xi_hat_seq = states[:, itau + 1] / abs_tau
    eta_hat_seq = states[:, itau + 2:itau + 2 + b] / abs_tau[:, None]
    ups = []
    for row in states:
        q = EdgePhasePoint.from_vector(row, b, f)
        ups.append(fiber_limit_point(spec, q))
    ups = np.array(ups)
    # Unwrap the fiber-limit sequence so the fit sees a continuous curve.
    for j in range(1, len(ups)):
        ups[j] = ups[j - 1] + spec.fiber.coordinate_delta(ups[j], ups[j - 1])

    residual = 0.0

    def fit(seq, scale=1.0):
        nonlocal residual
        value, res = _extrapolate(x_ladder, seq, scale)
        residual = max(residual, res)
        return value

    t_bar = fit(t_seq, scale=t_seq[0])
    y_bar = np.array([fit(y_seq[:, i], scale=y_seq[0, i]) for i in range(b)])
    xi_hat = fit(xi_hat_seq)
    eta_hat = np.array([fit(eta_hat_seq[:, i]) for i in range(b)])
    z_bar = spec.fiber.wrap(np.array([fit(ups[:, a]) for a in range(f)]))
    if residual > settings.event_fit_tol:
        raise IllConditionedEventError(
            "boundary extrapolation residual %.3g exceeds %.1g"
            % (residual, settings.event_fit_tol))
    sgn_tau = 1 if states[-1, itau] > 0 else -1
    probe = EdgePhasePoint(t=t_bar, x=0.0, y=y_bar, z=z_bar,
                           tau=float(sgn_tau), xi=xi_hat, eta=eta_hat,
                           zeta=np.zeros(f))
    cls, margin = classify_boundary(spec, normalize_cosphere(probe),
                                    tol_g=settings.tol_g)
    char_defect = abs(xi_hat * xi_hat - margin)
    if cls == BoundaryClass.HYPERBOLIC and char_defect > 1e-4:
        raise IllConditionedEventError(
            "extrapolated event misses the characteristic set by %.3g"
            % char_defect)
    return BoundaryEvent(branch_id=branch_id, boundary_class=cls,
                         t_bar=float(t_bar), y_bar=y_bar, z_bar=z_bar,
                         sgn_tau=sgn_tau, xi_hat=float(xi_hat),
                         eta_hat=eta_hat, margin=float(margin),
                         char_defect=float(char_defect),
                         residual=float(residual))


# --- branching -----------------------------------------------------------

@dataclass(frozen=True)
class BranchLaunch:
    data: BoundaryData
    kind: str
    fiber_point: np.ndarray


def _fan_points(spec, z_bar, n):
    """n fiber points spread uniformly over the fiber, anchored at z_bar."""
    f = spec.f
    if f == 1:
        period = spec.fiber.periods[0]
        if period is not None:
            return [spec.fiber.wrap(z_bar + np.array([period * i / n]))
                    for i in range(n)]
        lo, hi = spec.z_box[0]
        return [np.array([v]) for v in np.linspace(lo, hi, n)]
    per_axis = max(2, math.ceil(n ** (1.0 / f)))
    axes = []
    for a in range(f):
        period = spec.fiber.periods[a]
        if period is not None:
            axes.append(z_bar[a] + period * np.arange(per_axis) / per_axis)
        else:
            lo, hi = spec.z_box[a]
            axes.append(np.linspace(lo, hi, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    return [spec.fiber.wrap(row) for row in grid[:n]]


def branch_hyperbolic(spec, event, policy, settings=None):
    """Outgoing launch data for a hyperbolic event under a branch policy.

    All launches share the event's slow data; xi_hat keeps its magnitude
    with the sign flipped to the outgoing convention.
    """
    if settings is None:
        settings = FlowSettings()
    if event.boundary_class != BoundaryClass.HYPERBOLIC:
        raise ValueError("branching applies to hyperbolic events only")
    xi_out = -event.xi_hat

    def launch(z_point, kind):
        data = BoundaryData(t_bar=event.t_bar, y_bar=event.y_bar.copy(),
                            z_bar=np.asarray(z_point, float),
                            sgn_tau=event.sgn_tau, xi_hat=xi_out,
                            eta_hat=event.eta_hat.copy())
        return BranchLaunch(data=data, kind=kind,
                            fiber_point=np.asarray(z_point, float))

    if policy.kind == "same_fiber":
        return [launch(event.z_bar, BranchKind.DIFFRACTED)]
    if policy.kind == "geometric":
        partners = geometric_partners(spec, event.y_bar, event.z_bar,
                                      dedup_tol=settings.dedup_tol)
        partners.sort(key=lambda z: tuple(np.round(z, 9)))
        return [launch(z, BranchKind.GEOMETRIC) for z in partners]
    if policy.kind == "fan":
        return [launch(z, BranchKind.DIFFRACTED)
                for z in _fan_points(spec, event.z_bar, policy.n)]
    raise ConfigError("unknown branch policy %r" % (policy,))


# --- glancing continuation ------------------------------------------------

@dataclass
class TangentialPath:
    """Unit-cosphere tangential travel (t, y, eta_hat) within the boundary."""

    t: np.ndarray
    y: np.ndarray            # (n, b)
    eta_hat: np.ndarray      # (n, b)
    norm_drift: float        # worst deviation of |eta_hat|_h from 1


def _tangential_flow(spec, t0, y0, eta0, sgn_tau, delta, n_samples=33):
    ev = spec.evaluator()
    b = spec.b
    if b == 0 or delta == 0.0:
        ts = np.array([t0, t0 + delta])
        return TangentialPath(t=ts, y=np.zeros((2, b)),
                              eta_hat=np.zeros((2, b)), norm_drift=0.0)

    def rhs(lam, state):
        y = state[:b]
        eta = state[b:]
        h = ev.h.value(0.0, y, np.zeros(spec.f))
        He = np.linalg.solve(h, eta)
        deta = np.empty(b)
        for i in range(b):
            dh = ev.h.deriv(1 + i, 0.0, y, np.zeros(spec.f))
            deta[i] = -0.5 * float(He @ dh @ He) / sgn_tau
        return np.concatenate((-He / sgn_tau, deta))

    sol = solve_ivp(rhs, (0.0, delta), np.concatenate((y0, eta0)),
                    method="RK45", rtol=1e-11, atol=1e-13,
                    t_eval=np.linspace(0.0, delta, n_samples))
    ys = sol.y[:b].T
    etas = sol.y[b:].T
    drift = 0.0
    for y, eta in zip(ys, etas):
        h = ev.h.value(0.0, y, np.zeros(spec.f))
        drift = max(drift, abs(float(eta @ np.linalg.solve(h, eta)) - 1.0))
    return TangentialPath(t=t0 + sol.t, y=ys, eta_hat=etas, norm_drift=drift)


def continue_glancing(spec, event, delta, settings=None):
    """Tangential travel for parameter delta, then a grazing re-entry.

    Returns (TangentialPath, BoundaryData): the re-entry uses an
    infinitesimal outgoing xi_hat with eta_hat rescaled back onto the
    unit cosphere, realizing one admissible continuation of the
    tangency.
    """
    if settings is None:
        settings = FlowSettings()
    if event.boundary_class != BoundaryClass.GLANCING:
        raise ValueError("glancing continuation applies to glancing events")
    # Normalize the incoming data onto the unit cosphere before flowing.
    ev = spec.evaluator()
    eta0 = event.eta_hat.copy()
    if spec.b:
        h = ev.h.value(0.0, event.y_bar, np.zeros(spec.f))
        norm = math.sqrt(float(eta0 @ np.linalg.solve(h, eta0)))
        eta0 = eta0 / norm
    path = _tangential_flow(spec, event.t_bar, event.y_bar, eta0,
                            event.sgn_tau, delta)
    y_end = path.y[-1]
    eta_end = path.eta_hat[-1]
    xi_re = -event.sgn_tau * settings.glancing_xi
    if spec.b:
        h = ev.h.value(0.0, y_end, np.zeros(spec.f))
        eta_norm2 = float(eta_end @ np.linalg.solve(h, eta_end))
        eta_re = eta_end * math.sqrt((1.0 - xi_re * xi_re) / eta_norm2)
    else:
        eta_re = eta_end
    data = BoundaryData(t_bar=event.t_bar + delta, y_bar=y_end,
                        z_bar=event.z_bar.copy(), sgn_tau=event.sgn_tau,
                        xi_hat=xi_re, eta_hat=eta_re)
    return path, data


# --- path assembly ---------------------------------------------------------

@dataclass
class GbbBranch:
    branch_id: str
    kind: str
    parent_id: str | None = None
    fiber_point: np.ndarray | None = None
    seed: EdgePhasePoint | None = None
    segment: object = None
    event: BoundaryEvent | None = None
    tangential: TangentialPath | None = None
    children: list = field(default_factory=list)
    note: str = ""


@dataclass
class GbbPath:
    spec: object
    policy: BranchPolicy
    branches: dict
    root_id: str = "0"
    truncated: bool = False

    def events(self):
        out = []
        for bid in sorted(self.branches):
            ev = self.branches[bid].event
            if ev is not None:
                out.append(ev)
        return out

    def branch_ids(self):
        return sorted(self.branches)

    def segments(self):
        return [(bid, self.branches[bid].segment)
                for bid in sorted(self.branches)
                if self.branches[bid].segment is not None]


def trace_gbb(spec, q0, t_span, policy=SAME_FIBER, settings=None,
              glancing_interval=0.5):
    """Trace the broken bicharacteristic tree from an interior point.

    Alternates interior integration, event extrapolation and branching
    until every branch leaves t_span or the branch budget is exhausted
    (the partial path is returned with truncated=True).
    """
    if settings is None:
        settings = FlowSettings()
    if isinstance(policy, str):
        policy = BranchPolicy.parse(policy)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ConfigError("t_span must be increasing")
    if q0.t < t0:
        raise ConfigError("launch point starts before t_span")
    root = GbbBranch(branch_id="0", kind=BranchKind.INCIDENT, seed=q0)
    path = GbbPath(spec=spec, policy=policy, branches={"0": root})
    queue = deque(["0"])
    used = 0
    while queue:
        if used >= settings.branch_budget:
            path.truncated = True
            break
        bid = queue.popleft()
        branch = path.branches[bid]
        seed = branch.seed
        s_max = t1 - seed.t
        if s_max <= 0.0:
            branch.note = "launched outside t_span"
            continue
        direction = -1 if seed.tau > 0 else 1
        segment = integrate_interior(spec, seed, direction, settings,
                                     s_max=s_max)
        used += 1
        branch.segment = segment
        if segment.termination != Termination.BOUNDARY_APPROACH:
            branch.note = segment.termination.value
            continue
        event = detect_boundary_event(spec, segment, settings, branch_id=bid)
        branch.event = event
        if event.boundary_class == BoundaryClass.HYPERBOLIC:
            launches = branch_hyperbolic(spec, event, policy, settings)
        else:
            tangential, re_data = continue_glancing(
                spec, event, min(glancing_interval, t1 - event.t_bar),
                settings)
            branch.tangential = tangential
            launches = [BranchLaunch(data=re_data, kind=BranchKind.GLANCING,
                                     fiber_point=re_data.z_bar)]
        for i, launch in enumerate(launches):
            child_id = "%s.%d" % (bid, i)
            child = GbbBranch(branch_id=child_id, kind=launch.kind,
                              parent_id=bid, fiber_point=launch.fiber_point)
            try:
                child.seed = stable_manifold_launch(
                    spec, launch.data, RayEnd.OUTGOING, settings,
                    newton=launch.kind != BranchKind.GLANCING)
            except LaunchFailedError as err:
                child.note = "launch failed: %s" % err
                path.branches[child_id] = child
                branch.children.append(child_id)
                continue
            path.branches[child_id] = child
            branch.children.append(child_id)
            if child.seed.t <= t1:
                queue.append(child_id)
            else:
                child.note = "re-entry beyond t_span"
    return path


# --- conformance checks -----------------------------------------------------

def backward_event(spec, seed, settings=None):
    """Integrate a launch seed back toward the edge and extrapolate.

    Used to verify the hand-off: the re-detected boundary data of an
    outgoing seed should reproduce the data it was launched from.
    """
    if settings is None:
        settings = FlowSettings()
    direction = -1 if seed.xi > 0 else 1
    xi_hat = abs(seed.xi / seed.tau)
    s_max = 8.0 * seed.x / max(xi_hat, 1e-3)
    segment = integrate_interior(spec, seed, direction, settings,
                                 s_max=s_max)
    if segment.termination != Termination.BOUNDARY_APPROACH:
        raise IllConditionedEventError("seed did not re-approach the edge")
    return detect_boundary_event(spec, segment, settings)


def verify_handoff(spec, seed, data, settings=None):
    """Defects between a seed's re-detected boundary data and its target."""
    event = backward_event(spec, seed, settings)
    dz = spec.fiber.coordinate_delta(event.z_bar, data.z_bar)
    return {
        "t": abs(event.t_bar - data.t_bar),
        "y": float(np.max(np.abs(event.y_bar - data.y_bar))) if spec.b
             else 0.0,
        "eta": float(np.max(np.abs(event.eta_hat - data.eta_hat)))
               if spec.b else 0.0,
        "abs_xi": abs(abs(event.xi_hat) - abs(data.xi_hat)),
        "fiber": float(np.max(np.abs(dz))),
    }


@dataclass(frozen=True)
class LipschitzReport:
    max_segment_quotient: float
    max_slow_jump: float
    junction_jumps: tuple       # (branch_id, child_id, jump dict) triples
    fiber_jumps: tuple          # per-junction fiber-point movement (fast data)
    finite: bool


def lipschitz_check(path, settings=None, probe_junctions=True):
    """Difference quotients of the slow variables along a traced path.

    Along segments the quotient uses the unit-|dt| parameter; across
    each event junction the outgoing branch seed is integrated back to
    the edge and its re-extrapolated slow data compared with the
    event's.  Fiber-point movement (fast data) is reported separately
    and never counted as a slow jump.
    """
    if settings is None:
        settings = FlowSettings()
    spec = path.spec
    b = spec.b
    itau = 2 + b + spec.f
    max_quot = 0.0
    for _, segment in path.segments():
        if len(segment.s) < 2:
            continue
        ds = np.diff(segment.s)
        abs_tau = np.abs(segment.states[:, itau])
        slow = np.column_stack((
            segment.states[:, 0],
            segment.states[:, 1],
            segment.states[:, 2:2 + b],
            segment.states[:, itau + 2:itau + 2 + b] / abs_tau[:, None],
        ))
        quot = np.abs(np.diff(slow, axis=0)) / ds[:, None]
        if quot.size:
            max_quot = max(max_quot, float(quot.max()))
    junctions = []
    fiber_jumps = []
    max_jump = 0.0
    for bid in path.branch_ids():
        branch = path.branches[bid]
        if branch.event is None:
            continue
        event = branch.event
        for child_id in branch.children:
            child = path.branches[child_id]
            if child.seed is None or child.kind == BranchKind.GLANCING:
                continue
            fiber_jumps.append(float(np.max(np.abs(
                spec.fiber.coordinate_delta(child.fiber_point,
                                            event.z_bar)))))
            if not probe_junctions:
                continue
            defects = verify_handoff(spec, child.seed,
                                     child_or_event_data(child, event),
                                     settings)
            slow_jump = max(defects["t"], defects["y"], defects["eta"],
                            defects["abs_xi"])
            max_jump = max(max_jump, slow_jump)
            junctions.append((bid, child_id, defects))
    return LipschitzReport(max_segment_quotient=max_quot,
                           max_slow_jump=max_jump,
                           junction_jumps=tuple(junctions),
                           fiber_jumps=tuple(fiber_jumps),
                           finite=math.isfinite(max_quot))


def child_or_event_data(child, event):
    """Target boundary data of a child branch: event slow data at its fiber
    point, with the outgoing sign."""
    return BoundaryData(t_bar=event.t_bar, y_bar=event.y_bar,
                        z_bar=child.fiber_point, sgn_tau=event.sgn_tau,
                        xi_hat=-event.xi_hat, eta_hat=event.eta_hat)
