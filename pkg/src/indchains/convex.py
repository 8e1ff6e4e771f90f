"""Convex machinery over small dense polytopes.

* :func:`project` -- Euclidean projection onto ``{x : A_eq x = b_eq, A_ub x <= b_ub}``
  by a dual active-set method (Goldfarb-Idnani with identity Hessian) after
  eliminating the equalities through an orthonormal null-space basis.
* :func:`omd_update` -- one mirror-descent step with the quadratic regularizer.
* :func:`project_dykstra` -- slow alternating-projection cross-check.
* :func:`solve_lp` -- vertex-optimal LP solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, NumericalError, StructuralError, UnboundedError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PROJECTION_MAX_ITER = 100_000
SIMPLEX_MAX_PIVOTS = 10_000


@dataclass(frozen=True)
class RegularizerSpec:
    """``h(x) = (mu / 2) ||x||^2``; only the quadratic kind is supported."""

    kind: str = "quadratic"
    mu: float = 1.0

    def __post_init__(self):
        if self.kind != "quadratic":
            raise StructuralError(f"unsupported regularizer kind {self.kind!r}")
        if not self.mu > 0:
            raise StructuralError(f"strong convexity mu must be positive, got {self.mu}")

    def value(self, x):
        x = np.ravel(x)
        return 0.5 * self.mu * float(x @ x)

    def gradient(self, x):
        return self.mu * np.asarray(x, dtype=float)


def bregman(reg: RegularizerSpec, p, q) -> float:
    """``D_h(p || q) = h(p) - h(q) - <grad h(q), p - q>``."""
    diff = np.ravel(p) - np.ravel(q)
    return 0.5 * reg.mu * float(diff @ diff)


def _as_matrix(rows, dimension):
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dimension))
    return np.atleast_2d(arr)


@dataclass(eq=False)
class LinearConstraintSystem:
    """Polyhedron ``{x : A_eq x = b_eq, A_ub x <= b_ub}`` in ``R^dimension``.

    Nonemptiness is verified with a phase-1 LP on construction unless
    ``verify=False``.
    """

    dimension: int
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    verify: bool = field(default=True, repr=False)

    def __post_init__(self):
        n = int(self.dimension)
        self.A_eq = _as_matrix([] if self.A_eq is None else self.A_eq, n)
        self.A_ub = _as_matrix([] if self.A_ub is None else self.A_ub, n)
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).ravel()
        self.b_ub = np.asarray([] if self.b_ub is None else self.b_ub, dtype=float).ravel()
        for name, A, b in (("equality", self.A_eq, self.b_eq), ("inequality", self.A_ub, self.b_ub)):
            if A.shape[1] != n:
                raise StructuralError(f"{name} rows have length {A.shape[1]}, expected {n}")
            if A.shape[0] != b.shape[0]:
                raise StructuralError(
                    f"{A.shape[0]} {name} rows but {b.shape[0]} right-hand sides"
                )
        if self.verify:
            self.check_feasible()

    @classmethod
    def from_pairs(cls, dimension, equalities=(), inequalities=(), verify=True):
        """Build from ``(coefficients, rhs)`` pairs; inequalities mean ``<a, x> <= b``."""
        eq = list(equalities)
        ub = list(inequalities)
        return cls(
            dimension,
            A_eq=[a for a, _ in eq], b_eq=[b for _, b in eq],
            A_ub=[a for a, _ in ub], b_ub=[b for _, b in ub],
            verify=verify,
        )

    @property
    def num_equalities(self):
        return self.A_eq.shape[0]

    @property
    def num_inequalities(self):
        return self.A_ub.shape[0]

    def residuals(self, x):
        """``(max |A_eq x - b_eq|, max(A_ub x - b_ub, 0))``."""
        x = np.ravel(x)
        eq = float(np.abs(self.A_eq @ x - self.b_eq).max()) if self.num_equalities else 0.0
        ub = float(max(0.0, (self.A_ub @ x - self.b_ub).max())) if self.num_inequalities else 0.0
        return eq, ub

    def contains(self, x, tol=FEAS_TOL):
        return max(self.residuals(x)) <= tol

    def check_feasible(self):
        res = _linprog(np.zeros(self.dimension), self)
        if res.status == 2:
            raise InfeasibleError("constraint system has an empty feasible set")
        if res.status not in (0, 3):
            raise NumericalError(f"phase-1 solve failed: {res.message}")
        return np.asarray(res.x)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def _eliminate_equalities(A_eq, b_eq, n):
    if A_eq.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    U, sv, Vt = np.linalg.svd(A_eq)
    rank = int((sv > 1e-12 * max(1.0, sv[0])).sum())
    x_p = Vt[:rank].T @ ((U[:, :rank].T @ b_eq) / sv[:rank])
    if np.abs(A_eq @ x_p - b_eq).max() > FEAS_TOL * max(1.0, np.abs(b_eq).max()):
        raise InfeasibleError("equality constraints are inconsistent")
    return x_p, Vt[rank:].T


def _dual_active_set(w0, C, d, tol, max_iter):
    """``argmin 0.5||w - w0||^2  s.t.  C w <= d`` with unit-norm rows of ``C``.

    Starts from the unconstrained minimizer and repeatedly adds the most
    violated constraint, dropping active ones whose multiplier would turn
    negative.  Returns ``(w, active, multipliers)``.
    """
    w = w0.copy()
    active = []
    u = np.zeros(0)
    iterations = 0
    while True:
        if C.shape[0] == 0:
            return w, active, u
        viol = C @ w - d
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= tol:
            return w, active, u
        c_p = C[p]
        u_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise NumericalError(
                    "projection did not converge within the iteration cap",
                    residual=float(max(0.0, (C @ w - d).max())),
                )
            if active:
                N = C[active].T
                r = np.linalg.lstsq(N, c_p, rcond=None)[0]
                z = c_p - N @ r
            else:
                r = np.zeros(0)
                z = c_p
            zz = float(z @ z)
            v_p = float(c_p @ w - d[p])
            t2 = v_p / zz if zz > 1e-20 else np.inf
            t1, k = np.inf, -1
            for j in range(len(active)):
                if r[j] > 1e-14:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1, k = ratio, j
            if np.isinf(t1) and np.isinf(t2):
                raise InfeasibleError("projection target set is empty")
            t = min(t1, t2)
            if not np.isinf(t2):
                w = w - t * z
            if len(active):
                u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[k]
            u = np.delete(u, k)


def project(y, constraints: LinearConstraintSystem, tol=1e-12, max_iter=PROJECTION_MAX_ITER):
    """Euclidean projection of ``y`` onto the polyhedron ``constraints``."""
    y = np.asarray(y, dtype=float)
    shape = y.shape
    y = y.ravel()
    n = constraints.dimension
    if y.shape[0] != n:
        raise StructuralError(f"point has dimension {y.shape[0]}, system has {n}")
    x_p, Z = _eliminate_equalities(constraints.A_eq, constraints.b_eq, n)
    C = constraints.A_ub @ Z
    d = constraints.b_ub - constraints.A_ub @ x_p
    norms = np.linalg.norm(C, axis=1)
    flat = norms <= 1e-13
    if np.any(flat & (d < -FEAS_TOL)):
        raise InfeasibleError("an inequality is violated on the whole equality subspace")
    C = C[~flat] / norms[~flat, None]
    d = d[~flat] / norms[~flat]
    if Z.shape[1] == 0:
        if C.shape[0] and (-d).max() > FEAS_TOL:
            raise InfeasibleError("single equality point violates an inequality")
        return x_p.reshape(shape)
    w0 = Z.T @ (y - x_p)
    w, _, _ = _dual_active_set(w0, C, d, tol, max_iter)
    return (x_p + Z @ w).reshape(shape)


def omd_update(current, gradient_payoff, eta, constraints: LinearConstraintSystem,
               reg: RegularizerSpec = RegularizerSpec()):
    """``argmax_x  eta <x, g> - D_h(x || current)`` over the polytope.

    With ``h = (mu/2)||.||^2`` this is the projection of
    ``current + (eta / mu) g``.  ``current`` need not itself be feasible.
    """
    current = np.asarray(current, dtype=float)
    g = np.asarray(gradient_payoff, dtype=float).reshape(current.shape)
    if eta < 0:
        raise StructuralError(f"step size must be nonnegative, got {eta}")
    return project(current + (eta / reg.mu) * g, constraints)


def project_dykstra(y, constraints: LinearConstraintSystem, max_iter=200_000, tol=1e-13):
    """Dykstra's alternating projections onto the affine set and each halfspace.

    Much slower than :func:`project`; kept as an independent verification path.
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    x = y.ravel().copy()
    n = constraints.dimension
    if constraints.num_equalities:
        x_p, Z = _eliminate_equalities(constraints.A_eq, constraints.b_eq, n)

        def to_affine(v):
            return x_p + Z @ (Z.T @ (v - x_p))
    else:
        def to_affine(v):
            return v
    A = constraints.A_ub
    b = constraints.b_ub
    sq = np.einsum("ij,ij->i", A, A)
    m = A.shape[0]
    incr = np.zeros((m + 1, n))
    for _ in range(max_iter):
        prev = x.copy()
        z = x + incr[m]
        x = to_affine(z)
        incr[m] = z - x
        for j in range(m):
            z = x + incr[j]
            excess = A[j] @ z - b[j]
            x = z - (excess / sq[j]) * A[j] if excess > 0 and sq[j] > 0 else z
            incr[j] = z - x
        if np.abs(x - prev).max() < tol:
            return x.reshape(shape)
    raise NumericalError("Dykstra projection hit its iteration cap",
                         residual=float(np.abs(x - prev).max()))


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

@dataclass
class LPSolution:
    """Optimal vertex, its value and the dual certificate (same sense as ``value``)."""

    x: np.ndarray
    value: float
    dual_eq: np.ndarray
    dual_ub: np.ndarray
    dual_value: float

    def __iter__(self):
        yield self.x
        yield self.value


def _linprog(c, constraints):
    kwargs = {}
    if constraints.num_equalities:
        kwargs.update(A_eq=constraints.A_eq, b_eq=constraints.b_eq)
    if constraints.num_inequalities:
        kwargs.update(A_ub=constraints.A_ub, b_ub=constraints.b_ub)
    return linprog(
        c, bounds=(None, None), method="highs-ds",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
            "maxiter": SIMPLEX_MAX_PIVOTS,
        },
        **kwargs,
    )


def solve_lp(objective, constraints: LinearConstraintSystem, sense="maximize"):
    """Optimize ``<objective, x>`` over the polytope; returns an :class:`LPSolution`.

    The solution unpacks as ``x, value``.  Simplex output is a basic (vertex)
    solution.
    """
    if sense not in ("maximize", "minimize"):
        raise StructuralError(f"sense must be 'maximize' or 'minimize', got {sense!r}")
    c = np.asarray(objective, dtype=float).ravel()
    if c.shape[0] != constraints.dimension:
        raise StructuralError(
            f"objective has dimension {c.shape[0]}, system has {constraints.dimension}"
        )
    sign = -1.0 if sense == "maximize" else 1.0
    res = _linprog(sign * c, constraints)
    if res.status == 2:
        raise InfeasibleError("linear program is infeasible")
    if res.status == 3:
        raise UnboundedError("linear program is unbounded")
    if res.status != 0:
        raise NumericalError(f"linear program failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    dual_eq = np.asarray(res.eqlin.marginals) if constraints.num_equalities else np.zeros(0)
    dual_ub = np.asarray(res.ineqlin.marginals) if constraints.num_inequalities else np.zeros(0)
    dual_eq = sign * dual_eq
    dual_ub = sign * dual_ub
    return LPSolution(
        x=x, value=float(c @ x), dual_eq=dual_eq, dual_ub=dual_ub,
        dual_value=float(constraints.b_eq @ dual_eq + constraints.b_ub @ dual_ub),
    )
