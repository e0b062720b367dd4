"""Closed-form generating-function layer with constant closure factors.

With the closure ratios frozen at constants, the generating function
Q(x, y, t) = sum A[k,l](t) x^k y^l obeys a first-order quasilinear PDE whose
characteristics form a linear flow in (x-1, y-1):

  d/deta (x-1, y-1) = M (x-1, y-1),
  M = [[ pb*beta/2,              -pb*beta/2                   ],
       [ -(pb*(1+alpha)+p)/2,    (pb*(1+alpha)+p)/2 + p/2     ]]

with pb = 1 - p, and Q grows along a characteristic at rate
(p*gamma/2)(x-1). Note the second row carries the full advection of the
active-link marker, including the rewiring contribution p/2 (y - x); this
is what makes the characteristics consistent with the PDE itself and with
the steady-state identity c1 + c2 = kappa.

Because the initial exponent is linear in (x-1, y-1) and the flow is
linear, the solution stays exponential-affine for all time:

  Q(x, y, t) = exp(c1(t) (x-1) + c2(t) (y-1)),
  dc/dt = -M^T c + (p*gamma/2) e1,   c(0) = (kappa/2, kappa/2),

equivalently the coefficients A[k,l](t) remain a product of Poisson
distributions with means c1(t), c2(t). c2(t) is the mean active degree.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import ClosureFactors

DEGENERACY_LIMIT = 1e-10
FIXED_POINT_TOL = 1e-10
FIXED_POINT_HORIZON = 2000.0
FIXED_POINT_MAX_ITER = 200


class DegenerateFlow(RuntimeError):
    """Eigenvector matrix is numerically singular.

    The closed form is unusable here; evaluate via eval_q_numeric, which
    integrates the characteristic equations directly.
    """


class FixedPointError(RuntimeError):
    """Self-consistency iteration failed to converge."""

    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def steady_gamma(kappa, p):
    """Self-consistent steady mean active degree, clamped at the transition.

    (kappa - (1+p)/(1-p)) / 2, or 0 beyond the critical rewiring rate where
    the active links vanish. p = 1 is rejected: the pure-rewiring limit has
    no adoption dynamics and only the agent-based layer applies.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError("steady_gamma requires 0 <= p < 1")
    return max(0.0, (kappa - (1.0 + p) / (1.0 - p)) / 2.0)


def steady_gamma_unclamped(kappa, p):
    """Raw steady value, negative beyond the transition (diagnostic)."""
    if not 0.0 <= p < 1.0:
        raise ValueError("requires 0 <= p < 1")
    return (kappa - (1.0 + p) / (1.0 - p)) / 2.0


def critical_p(kappa):
    """Critical rewiring rate (kappa - 1) / (kappa + 1), floored at 0."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return max(0.0, (kappa - 1.0) / (kappa + 1.0))


@dataclass(frozen=True)
class CharacteristicFlow:
    """Linear characteristic flow and its closed-form eigen-decomposition."""

    p: float
    factors: ClosureFactors
    matrix: np.ndarray        # 2x2, acts on (x-1, y-1)
    eigenvalues: np.ndarray   # (lam1, lam2), lam1 >= lam2
    eigenvectors: np.ndarray  # columns v1, v2 (unit norm)
    det_v: float

    def backward(self, t, dx, dy):
        """exp(-M t) applied to (dx, dy): the characteristic label."""
        return self._apply(np.exp(-self.eigenvalues * t), dx, dy)

    def forward(self, t, dx, dy):
        return self._apply(np.exp(self.eigenvalues * t), dx, dy)

    def _apply(self, scales, dx, dy):
        coeffs = np.linalg.solve(self.eigenvectors, np.array([dx, dy]))
        out = self.eigenvectors @ (scales * coeffs)
        return float(out[0]), float(out[1])


def build_flow(p, factors):
    """Assemble the characteristic matrix and eigen-decompose it.

    The 2x2 eigenproblem is solved in closed form from trace and
    determinant so the zero-eigenvalue branch is exact.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    pb = 1.0 - p
    b = pb * factors.beta / 2.0
    c = (pb * (1.0 + factors.alpha) + p) / 2.0
    s = p / 2.0
    matrix = np.array([[b, -b], [-c, c + s]])
    trace = b + c + s
    det = b * s
    disc = trace * trace - 4.0 * det
    root = math.sqrt(max(disc, 0.0))
    lam = np.array([(trace + root) / 2.0, (trace - root) / 2.0])
    vecs = np.column_stack([_eigenvector(b, c, s, l) for l in lam])
    det_v = float(vecs[0, 0] * vecs[1, 1] - vecs[0, 1] * vecs[1, 0])
    if abs(det_v) <= DEGENERACY_LIMIT:
        raise DegenerateFlow(
            f"eigenvector determinant {det_v:.2e} is numerically singular "
            "for these parameters; use eval_q_numeric instead")
    return CharacteristicFlow(p, factors, matrix, lam, vecs, det_v)


def _eigenvector(b, c, s, lam):
    # row 1 gives (b, b - lam), row 2 gives (c + s - lam, c); both span the
    # eigenspace, so take whichever is better conditioned
    cand1 = np.array([b, b - lam])
    cand2 = np.array([c + s - lam, c])
    v = cand1 if np.dot(cand1, cand1) >= np.dot(cand2, cand2) else cand2
    norm = math.sqrt(float(np.dot(v, v)))
    if norm == 0.0:
        raise DegenerateFlow("zero eigenvector; parameters are degenerate")
    return v / norm


@dataclass(frozen=True)
class AnalyticSolution:
    """Generating-function solution for fixed (kappa, p, closure factors)."""

    kappa: float
    p: float
    factors: ClosureFactors
    flow: CharacteristicFlow


def solve(kappa, p, factors=None):
    """Build the analytic solution; factors default to the steady values."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if factors is None:
        g = steady_gamma(kappa, p)
        factors = ClosureFactors(g, g, g)
    return AnalyticSolution(kappa, p, factors, build_flow(p, factors))


def _phi_grow(lam, t):
    # (exp(lam t) - 1) / lam, continuous through lam = 0
    if lam == 0.0:
        return t
    return math.expm1(lam * t) / lam


def _phi_decay(lam, t):
    # (1 - exp(-lam t)) / lam, continuous through lam = 0
    if lam == 0.0:
        return t
    return -math.expm1(-lam * t) / lam


def exponent_coeffs(sol, t):
    """Poisson means (c1, c2) of the solution at time t.

    c(t) = exp(-M^T t) (kappa/2) [1,1] + (p gamma / 2) Jtilde(t)^T e1 with
    Jtilde(t) = integral of exp(-M tau) over [0, t]; only decaying
    exponentials appear, so arbitrarily large t is safe.
    """
    flow = sol.flow
    V = flow.eigenvectors
    Vinv = np.linalg.inv(V)
    lam = flow.eigenvalues
    decay = V @ np.diag(np.exp(-lam * t)) @ Vinv
    jtilde = V @ np.diag([_phi_decay(l, t) for l in lam]) @ Vinv
    c = decay.T @ np.array([sol.kappa / 2.0, sol.kappa / 2.0])
    c = c + sol.p * sol.factors.gamma / 2.0 * (jtilde.T @ np.array([1.0, 0.0]))
    return float(c[0]), float(c[1])


def gamma_t(sol, t):
    """Mean active degree of the analytic solution at time t."""
    return exponent_coeffs(sol, t)[1]


def eval_q(sol, x, y, t):
    """Q(x, y, t) through the exponential-affine representation."""
    c1, c2 = exponent_coeffs(sol, t)
    return math.exp(c1 * (x - 1.0) + c2 * (y - 1.0))


def eval_q_spectral(sol, x, y, t):
    """Q(x, y, t) assembled literally from eigen-components.

    Back-traces the characteristic label xi, then accumulates the source
    integral mode by mode:

      Q = exp( kappa/2 (xi1 + xi2 - 2)
               + (p gamma / (2 det V)) * [ v1_x (v2_y w1 - v2_x w2) phi(l1)
                                         + v2_x (v1_x w2 - v1_y w1) phi(l2) ] )

    with w = xi - 1, phi(l) = (exp(l t) - 1)/l. Kept as an independent
    coding of the same solution; eval_q must agree with it to roundoff.
    """
    flow = sol.flow
    w1, w2 = flow.backward(t, x - 1.0, y - 1.0)
    V = flow.eigenvectors
    lam = flow.eigenvalues
    bracket = (V[0, 0] * (V[1, 1] * w1 - V[0, 1] * w2) * _phi_grow(lam[0], t)
               + V[0, 1] * (V[0, 0] * w2 - V[1, 0] * w1) * _phi_grow(lam[1], t))
    exponent = (sol.kappa / 2.0 * (w1 + w2)
                + sol.p * sol.factors.gamma / (2.0 * flow.det_v) * bracket)
    return math.exp(exponent)


def eval_q_numeric(sol, x, y, t, rtol=1e-11, atol=1e-13):
    """Q(x, y, t) by direct numerical integration of the characteristics.

    Independent of the eigen-decomposition: traces (x, y) back to its label
    with an adaptive integrator, then integrates the log-source forward.
    Serves as the oracle for the closed form and as the fallback when the
    flow is degenerate.
    """
    from scipy.integrate import solve_ivp

    p = sol.p
    pb = 1.0 - p
    alpha, beta, gamma = sol.factors.as_tuple()

    def velocity(z):
        dx = pb * beta / 2.0 * (z[0] - z[1])
        dy = ((pb * (1.0 + alpha) + p) / 2.0 * (z[1] - z[0])
              + p / 2.0 * (z[1] - 1.0))
        return dx, dy

    if t == 0.0:
        return math.exp(sol.kappa * (x + y - 2.0) / 2.0)
    back = solve_ivp(lambda _, z: [-v for v in velocity(z)], (0.0, t),
                     [x, y], rtol=rtol, atol=atol)
    if not back.success:
        raise RuntimeError(f"backward characteristic failed: {back.message}")
    xi1, xi2 = back.y[0, -1], back.y[1, -1]

    def forward(_, z):
        dx, dy = velocity(z)
        return [dx, dy, p * gamma / 2.0 * (z[0] - 1.0)]

    fwd = solve_ivp(forward, (0.0, t), [xi1, xi2, 0.0], rtol=rtol, atol=atol)
    if not fwd.success:
        raise RuntimeError(f"forward characteristic failed: {fwd.message}")
    return math.exp(sol.kappa * (xi1 + xi2 - 2.0) / 2.0 + fwd.y[2, -1])


def analytic_coefficient(sol, k, l, t):
    """A[k,l](t): Poisson-product Taylor coefficient of the solution."""
    c1, c2 = exponent_coeffs(sol, t)
    if c1 < 0 or c2 < 0:
        raise ValueError("coefficient extraction needs nonnegative exponent "
                         f"coefficients, got ({c1:.3g}, {c2:.3g})")
    log_val = (-c1 - c2 + _xlogy(k, c1) + _xlogy(l, c2)
               - math.lgamma(k + 1) - math.lgamma(l + 1))
    return math.exp(log_val)


def _xlogy(n, v):
    if n == 0:
        return 0.0
    if v == 0.0:
        return -math.inf
    return n * math.log(v)


def pde_residual(sol, x, y, t):
    """|Q_t - RHS| of the generating-function PDE at one point.

    Q_t, Q_x, Q_y come in closed form from the exponential-affine
    representation; the right side is assembled from the PDE's literal
    coefficient expressions. A vanishing residual is the check that the
    characteristic construction actually solves the PDE.
    """
    p = sol.p
    pb = 1.0 - p
    alpha, beta, gamma = sol.factors.as_tuple()
    c1, c2 = exponent_coeffs(sol, t)
    q = math.exp(c1 * (x - 1.0) + c2 * (y - 1.0))
    qx = c1 * q
    qy = c2 * q
    m = sol.flow.matrix
    c1dot = -(m[0, 0] * c1 + m[1, 0] * c2) + p * gamma / 2.0
    c2dot = -(m[0, 1] * c1 + m[1, 1] * c2)
    qt = (c1dot * (x - 1.0) + c2dot * (y - 1.0)) * q
    rhs = (pb * beta / 2.0 * (y - x) * qx
           + (pb / 2.0 * (x - y) + pb * alpha / 2.0 * (x - y)
              + p / 2.0 * (x - y) + p / 2.0 * (1.0 - y)) * qy
           + p * gamma / 2.0 * (x - 1.0) * q)
    return abs(qt - rhs)


def solve_factors(kappa, p, method="closed-form"):
    """Self-consistent constant closure factors (alpha = beta = gamma).

    closed-form: the steady value directly. fixed-point: iterate the
    consistency condition through the actual solution dynamics. The direct
    update gamma <- Q_y(1,1,T)/Q(1,1,T) is a fixed point for every trial
    value (the steady exponent reproduces whatever gamma was assumed), so
    the iteration evaluates Q_y through the conserved mean degree instead:
    gamma <- kappa - Q_x(1,1,T)/Q(1,1,T), which pins the physical branch.
    """
    if method == "closed-form":
        g = steady_gamma(kappa, p)
        return ClosureFactors(g, g, g)
    if method != "fixed-point":
        raise ValueError("method must be 'closed-form' or 'fixed-point'")
    if not 0.0 <= p < 1.0:
        raise ValueError("fixed-point solve requires 0 <= p < 1")
    g = kappa / 2.0
    for _ in range(FIXED_POINT_MAX_ITER):
        sol = AnalyticSolution(kappa, p, ClosureFactors(g, g, g),
                               build_flow(p, ClosureFactors(g, g, g)))
        c1, _ = exponent_coeffs(sol, FIXED_POINT_HORIZON)
        target = kappa - c1
        new = 0.5 * (g + target)
        if new < 0.0:
            new = 0.0
        if abs(new - g) < FIXED_POINT_TOL:
            return ClosureFactors(new, new, new)
        g = new
    raise FixedPointError(
        f"no self-consistent factors after {FIXED_POINT_MAX_ITER} "
        f"iterations (kappa={kappa}, p={p}); last iterate {g:.6g}", g)
