"""Per-player transition counters and episode-indexed confidence boxes.

The box for episode ``k`` keeps, for every ``(s, a, s')``, an interval that
is the running intersection of ``[Pbar - eps, Pbar + eps]`` clipped to
``[0, 1]``.  Intervals therefore only ever shrink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex import LinearConstraintSystem
from .errors import ConfidenceCollapseError, StructuralError
from .occupancy import ShrunkPolytopeSpec

COLLAPSE_TOL = 1e-12


@dataclass(frozen=True)
class WidthSchedule:
    """Half-width rule ``eps(s, a) = sqrt(L / (c * max(1, N(s, a))))``.

    ``L = ln(n K |A| |S|^2) - ln(gamma)`` in finite-horizon mode and
    ``ln(2 n k^2 |A| |S|^2) - ln(gamma)`` in asymptotic mode.  ``c`` is 2 for
    the default ``variant="tight"``; ``variant="wide"`` drops the factor 2
    in finite-horizon mode.
    """

    mode: str
    n: int
    gamma: float
    num_states: int
    num_actions: int
    horizon: int | None = None
    variant: str = "tight"

    def __post_init__(self):
        if self.mode not in ("finite", "asymptotic"):
            raise StructuralError(f"mode must be 'finite' or 'asymptotic', got {self.mode!r}")
        if not 0.0 < self.gamma < 1.0:
            raise StructuralError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.mode == "finite" and (self.horizon is None or self.horizon < 1):
            raise StructuralError("finite mode needs a horizon K >= 1")
        if self.variant not in ("tight", "wide"):
            raise StructuralError(f"unknown width variant {self.variant!r}")

    def log_term(self, k):
        size = self.n * self.num_actions * self.num_states**2
        if self.mode == "finite":
            return math.log(size * self.horizon) - math.log(self.gamma)
        return math.log(2 * size * k * k) - math.log(self.gamma)

    def width(self, k, counts):
        """Half-widths for episode ``k`` (1-based) given visit counts ``N``."""
        factor = 1.0 if (self.variant == "wide" and self.mode == "finite") else 2.0
        counts = np.maximum(1, np.asarray(counts))
        return np.sqrt(self.log_term(k) / (factor * counts))


@dataclass(eq=False)
class ConfidenceState:
    """Visit counters plus the current interval box for one player.

    ``k`` counts completed episode updates; ``lower``/``upper`` have shape
    ``(S, A, S)``.
    """

    N: np.ndarray
    M: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k: int = 0

    @classmethod
    def fresh(cls, num_states, num_actions):
        S, A = num_states, num_actions
        return cls(
            N=np.zeros((S, A), dtype=np.int64),
            M=np.zeros((S, A, S), dtype=np.int64),
            lower=np.zeros((S, A, S)),
            upper=np.ones((S, A, S)),
        )

    @property
    def shape(self):
        return self.M.shape

    def record_transition(self, s, a, s_next):
        self.M[s, a, s_next] += 1
        self.N[s, a] += 1
        return self

    def empirical_kernel(self):
        return self.M / np.maximum(1, self.N)[:, :, None]

    def _fresh_box(self, schedule):
        eps = schedule.width(self.k + 1, self.N)[:, :, None]
        pbar = self.empirical_kernel()
        return np.clip(pbar - eps, 0.0, 1.0), np.clip(pbar + eps, 0.0, 1.0)

    def end_episode_update(self, schedule: WidthSchedule):
        """Intersect the box with this episode's fresh intervals and advance ``k``.

        Raises :class:`ConfidenceCollapseError` (leaving the state untouched)
        when the intersection is empty.
        """
        lo, hi = self._fresh_box(schedule)
        lower = np.maximum(self.lower, lo)
        upper = np.minimum(self.upper, hi)
        crossed = lower > upper + COLLAPSE_TOL
        if np.any(crossed):
            idx = tuple(int(i) for i in np.argwhere(crossed)[0])
            raise ConfidenceCollapseError(
                f"confidence interval for (s, a, s')={idx} became empty at episode {self.k + 1}",
                index=idx,
            )
        lower = np.minimum(lower, upper)
        if np.any(upper.sum(axis=2) < 1.0 - COLLAPSE_TOL) or np.any(lower.sum(axis=2) > 1.0 + COLLAPSE_TOL):
            s, a = (int(i) for i in np.argwhere(
                (upper.sum(axis=2) < 1.0 - COLLAPSE_TOL) | (lower.sum(axis=2) > 1.0 + COLLAPSE_TOL)
            )[0])
            raise ConfidenceCollapseError(
                f"no kernel row for (s={s}, a={a}) fits the box at episode {self.k + 1}",
                index=(s, a),
            )
        self.lower, self.upper = lower, upper
        self.k += 1
        return self

    def restart(self, schedule: WidthSchedule):
        """Recovery after a collapse: drop the intersection history."""
        self.lower, self.upper = self._fresh_box(schedule)
        self.k += 1
        return self

    def contains(self, kernel, tol=COLLAPSE_TOL):
        kernel = np.asarray(kernel)
        return bool(np.all(kernel >= self.lower - tol) and np.all(kernel <= self.upper + tol))

    def widths(self):
        return self.upper - self.lower

    def max_width(self):
        return float(self.widths().max())

    def min_width(self):
        return float(self.widths().min())

    def volume(self):
        """Sum of interval widths (nonincreasing across episodes)."""
        return float(self.widths().sum())


def occupancy_constraints(spec: ShrunkPolytopeSpec, lower=None, upper=None, verify=True):
    """Linear system for ``q`` (flattened ``(s, a, s')`` row-major).

    Rows: total mass 1, flow balance per state, ``rho >= delta`` and, when a
    box is given, ``lower * rho <= q <= upper * rho``.  Without a box only
    ``q >= 0`` is added.
    """
    S, A = spec.num_states, spec.num_actions
    dim = S * A * S
    idx = np.arange(dim).reshape(S, A, S)

    A_eq = [np.ones(dim)]
    for s in range(S):
        row = np.zeros(dim)
        row[idx[:, :, s].ravel()] += 1.0
        row[idx[s].ravel()] -= 1.0
        A_eq.append(row)
    b_eq = [1.0] + [0.0] * S

    A_ub, b_ub = [], []
    for s in range(S):
        for a in range(A):
            row = np.zeros(dim)
            row[idx[s, a]] = -1.0
            A_ub.append(row)
            b_ub.append(-spec.delta)
    lower = np.zeros(spec.shape) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(spec.shape) if upper is None else np.asarray(upper, dtype=float)
    for s in range(S):
        for a in range(A):
            for t in range(S):
                row = np.zeros(dim)
                row[idx[s, a]] = lower[s, a, t]
                row[idx[s, a, t]] -= 1.0
                A_ub.append(row)
                b_ub.append(0.0)
                if upper[s, a, t] < 1.0:
                    row = np.zeros(dim)
                    row[idx[s, a]] = -upper[s, a, t]
                    row[idx[s, a, t]] += 1.0
                    A_ub.append(row)
                    b_ub.append(0.0)
    return LinearConstraintSystem(dim, A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub, verify=verify)


def as_constraints(state: ConfidenceState, spec: ShrunkPolytopeSpec, verify=True):
    """Shrunk occupancy polytope restricted to kernels inside ``state``'s box."""
    return occupancy_constraints(spec, state.lower, state.upper, verify=verify)
