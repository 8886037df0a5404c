"""Finite windows of the small-gap / small-coefficient subsequence.

A norm m_k is accepted into a window when two checkable conditions hold
with explicit constants:

  (i)  the physical double gap n_{k+1} - n_{k-1} is at most
       c_gap * n_k^{eps_prime};
  (ii) for every nonzero shift |zeta| <= n_k^eps and every annulus vector
       xi (annulus half-width L_0 = n_k^delta around n_k), the distance
       from 4*pi^2*|xi+zeta|^2 to the whole closed interval [n_k, n_{k+1}]
       is at least L_0 / c_coeff, i.e. |c_lambda(xi+zeta)| <= c_coeff/L_0
       uniformly in lambda.

Both checks are exhaustive over the finite index sets, so acceptance is
deterministic.  The asymptotic theory needs delta inside
(theta/2, 1/2 - theta) with theta the circle-law remainder exponent; finite
windows are often more interesting outside that range, so the range is
recorded as a flag rather than enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfRangeError, ValidationError
from .lattice import FOUR_PI_SQ, SpectrumTable, annulus_norms, shell_vectors

#: circle-law remainder exponent (best known, used only for parameter bookkeeping)
THETA_DEFAULT = 133.0 / 416.0


def epsilon_from_delta(theta: float, delta: float) -> float:
    """The shift-range exponent (1/2 - theta - delta) / 2."""
    eps = (0.5 - theta - delta) / 2.0
    if not eps > 0:
        raise ValidationError(
            f"delta {delta} admits no positive shift exponent at theta {theta}"
        )
    return eps


@dataclass(frozen=True)
class SPrimeParams:
    """Constants for the window conditions.

    eps defaults to the derived value (1/2 - theta - delta)/2 when that is
    positive; for larger delta it must be supplied explicitly.
    """

    delta: float = 0.1
    theta: float = THETA_DEFAULT
    eps: float | None = None
    eps_prime: float | None = None
    c_gap: float = 10.0
    c_coeff: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValidationError(f"delta must lie in (0, 1/2), got {self.delta}")
        if not 0.0 < self.theta < 0.5:
            raise ValidationError(f"theta must lie in (0, 1/2), got {self.theta}")
        if self.c_gap <= 0 or self.c_coeff <= 0:
            raise ValidationError("condition constants must be positive")
        if self.eps is None:
            object.__setattr__(self, "eps", epsilon_from_delta(self.theta, self.delta))
        elif not self.eps > 0:
            raise ValidationError("eps must be positive")
        if self.eps_prime is None:
            object.__setattr__(self, "eps_prime", self.eps)
        elif not self.eps_prime > 0:
            raise ValidationError("eps_prime must be positive")

    @property
    def delta_in_paper_range(self) -> bool:
        return self.theta / 2.0 < self.delta < 0.5 - self.theta

    def l0(self, m_center: int) -> float:
        """Annulus half-width L_0 = (4*pi^2*m_k)^delta."""
        return (FOUR_PI_SQ * m_center) ** self.delta

    def shift_bound(self, m_center: int) -> float:
        """Largest |zeta| tested: (4*pi^2*m_k)^eps."""
        return (FOUR_PI_SQ * m_center) ** self.eps


def shift_vectors(dim: int, bound: float) -> np.ndarray:
    """All nonzero integer vectors with |zeta| <= bound, lexicographic order."""
    top = math.floor(bound)
    if top < 1:
        return np.zeros((0, dim), dtype=np.int64)
    rng = np.arange(-top, top + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    keep = (pts**2).sum(axis=1) <= bound * bound
    keep &= np.any(pts != 0, axis=1)
    pts = pts[keep]
    order = np.lexsort(tuple(pts[:, k] for k in range(dim - 1, -1, -1)))
    return pts[order].astype(np.int64)


def gap_condition(table: SpectrumTable, m_center: int, params: SPrimeParams) -> bool:
    """Condition (i): 4*pi^2*(m_{k+1} - m_{k-1}) <= c_gap * n_k^{eps_prime}."""
    triple = table.gap_triple(m_center)
    return triple.outer_gap <= params.c_gap * (FOUR_PI_SQ * m_center) ** params.eps_prime


def _min_interval_distance(n_shifted: float, n_lo: float, n_hi: float) -> float:
    """Distance from n_shifted to the closed interval [n_lo, n_hi]."""
    if n_lo <= n_shifted <= n_hi:
        return 0.0
    return min(abs(n_shifted - n_lo), abs(n_shifted - n_hi))


def _coeff_check(
    points: np.ndarray, shifts: np.ndarray, n_lo: float, n_hi: float, threshold: float
) -> bool:
    """Exhaustive scan: every |xi+zeta|^2, scaled by 4*pi^2, must keep
    distance >= threshold from [n_lo, n_hi]."""
    for zeta in shifts:
        shifted = points + zeta
        norms = (shifted.astype(np.int64) ** 2).sum(axis=1)
        for m in np.unique(norms):
            if _min_interval_distance(FOUR_PI_SQ * float(m), n_lo, n_hi) < threshold:
                return False
    return True


def coeff_condition(table: SpectrumTable, m_center: int, params: SPrimeParams) -> bool:
    """Condition (ii), checked exhaustively over annulus points and shifts.

    The distance |4*pi^2*|xi+zeta|^2 - lambda| is monotone in lambda on
    either side of the interval, so the minimum over the closed interval is
    attained at an endpoint (or is zero when the shifted norm falls inside).
    An empty annulus makes the condition vacuously true.
    """
    triple = table.gap_triple(m_center)
    l0 = params.l0(m_center)
    shells = annulus_norms(table, m_center, l0)
    points = (
        np.concatenate([shell_vectors(table.dim, m) for m in shells], axis=0)
        if shells
        else np.zeros((0, table.dim), dtype=np.int64)
    )
    if points.shape[0] == 0:
        return True
    shifts = shift_vectors(table.dim, params.shift_bound(m_center))
    threshold = 0.0 if math.isinf(params.c_coeff) else l0 / params.c_coeff
    return _coeff_check(points, shifts, triple.n_center, triple.n_next, threshold)


@dataclass
class SPrimeWindow:
    params: SPrimeParams
    dim: int
    m_range: tuple[int, int]
    members: list[int]  # all spectrum norms scanned (both neighbors in table)
    gap_ok: list[bool]
    coeff_ok: list[bool]
    heuristic_d3: bool = field(default=False)

    @property
    def accepted(self) -> list[int]:
        return [
            m
            for m, g, c in zip(self.members, self.gap_ok, self.coeff_ok)
            if g and c
        ]

    @property
    def density(self) -> float:
        if not self.members:
            return 0.0
        return len(self.accepted) / len(self.members)

    def rows(self):
        for m, g, c in zip(self.members, self.gap_ok, self.coeff_ok):
            yield {"m_k": m, "gap_ok": g, "coeff_ok": c, "accepted": g and c}

    def summary(self) -> dict:
        p = self.params
        return {
            "params": {
                "delta": p.delta,
                "theta": p.theta,
                "eps": p.eps,
                "eps_prime": p.eps_prime,
                "c_gap": p.c_gap,
                "c_coeff": p.c_coeff,
                "delta_in_paper_range": p.delta_in_paper_range,
            },
            "dim": self.dim,
            "range": list(self.m_range),
            "scanned": len(self.members),
            "accepted": len(self.accepted),
            "density": self.density,
            "heuristic_d3": self.heuristic_d3,
        }


def build_window(
    table: SpectrumTable, m_lo: int, m_hi: int, params: SPrimeParams
) -> SPrimeWindow:
    """Scan all spectrum members in [m_lo, m_hi] against both conditions.

    Members whose neighbor triple is not fully tabulated are skipped (they
    cannot be checked).  Deterministic: output depends only on the inputs.
    """
    if not m_lo < m_hi:
        raise ValidationError("need m_lo < m_hi")
    if m_hi > table.m_max:
        raise OutOfRangeError(f"window end {m_hi} exceeds table limit {table.m_max}")
    members, gaps, coeffs = [], [], []
    for m in table.norms_in(m_lo, m_hi).tolist():
        try:
            table.gap_triple(m)
        except OutOfRangeError:
            continue
        members.append(int(m))
        gaps.append(gap_condition(table, m, params))
        coeffs.append(coeff_condition(table, m, params))
    if not members:
        raise ValidationError(f"no checkable spectrum members in [{m_lo}, {m_hi}]")
    return SPrimeWindow(
        params=params,
        dim=table.dim,
        m_range=(m_lo, m_hi),
        members=members,
        gap_ok=gaps,
        coeff_ok=coeffs,
        heuristic_d3=(table.dim == 3),
    )


def recheck_conclusion(
    table: SpectrumTable, window: SPrimeWindow, m_center: int
) -> bool:
    """Post-hoc verification of the accepted conclusion for one norm.

    Re-derives |c_lambda(xi+zeta)| <= c_coeff / L_0 at both interval
    endpoints directly from coefficient values, independently of the
    distance logic used during the scan.
    """
    params = window.params
    triple = table.gap_triple(m_center)
    l0 = params.l0(m_center)
    bound = params.c_coeff / l0
    shells = annulus_norms(table, m_center, l0)
    shifts = shift_vectors(table.dim, params.shift_bound(m_center))
    for m in shells:
        for xi in shell_vectors(table.dim, m):
            for zeta in shifts:
                ms = int(((xi + zeta) ** 2).sum())
                for lam in (triple.n_center, triple.n_next):
                    denom = FOUR_PI_SQ * ms - lam
                    if denom == 0.0 or abs(1.0 / denom) > bound:
                        return False
    return True
