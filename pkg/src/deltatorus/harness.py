"""Seeded Monte Carlo over scatterer configurations.

Positions are drawn from a counter-based generator (Philox, keyed by the
run seed with the trial index in the counter word), so trial t is the same
bit pattern no matter how many worker threads execute the run or in what
order.  Each trial solves (or synthesizes) one superposition in a fixed
spectral gap, assembles its Fourier field and evaluates the functionals;
aggregation is a commutative reduction followed by a sort on trial index.

Also home to the scaling arithmetic relating torus size, energy and
density, which is exact over Fractions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NonSPrimeError, ValidationError
from .greens import ShellSums, SpectralParameter, TruncationPolicy
from .lattice import FOUR_PI_SQ, GapTriple, SpectrumTable, enumerate_spectrum
from .measure import (
    Observable,
    assemble_field,
    equidistribution_error,
    functional_A,
    functional_B,
    functional_C,
    lex_first_shell_vector,
    pair_with_observable,
    sigma_sum,
    split_annulus,
)
from .scatterer import ScattererConfig, SecularWorkspace, find_new_eigenvalues
from .sprime import SPrimeParams, coeff_condition, gap_condition

GAMMA_BY_DIM = {2: Fraction(17, 832), 3: Fraction(1, 12)}

MIN_PAIR_DISTANCE = 1e-9


def sample_positions(seed: int, trial_index: int, n: int, dim: int) -> np.ndarray:
    """N uniform torus points, reproducible from (seed, trial_index) alone.

    Philox4x64 with the seed as key and the trial index in the counter;
    coordinates are drawn row-major and the whole batch is redrawn from the
    same stream while any two points come closer than MIN_PAIR_DISTANCE.
    """
    if n < 1:
        raise ValidationError("need at least one point")
    bg = np.random.Philox(key=np.uint64(seed), counter=[0, 0, 0, np.uint64(trial_index)])
    gen = np.random.Generator(bg)
    while True:
        pts = gen.uniform(size=(n, dim))
        ok = True
        for a in range(n):
            for b in range(a + 1, n):
                d = np.abs(pts[a] - pts[b])
                d = np.minimum(d, 1.0 - d)
                if math.sqrt(float((d * d).sum())) < MIN_PAIR_DISTANCE:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return pts


@dataclass
class TrialSpec:
    """Full description of one Monte Carlo run."""

    dim: int
    n_scatterers: int
    m_center: int
    seed: int
    trials: int
    phases: list | None = None  # diagonal extension parameter, default zeros
    u_matrix: list | None = None  # full unitary, nested [re, im] rows
    delta: float = 0.3  # annulus rule L_0 = (4 pi^2 m_k)^delta
    l0_override: float | None = None
    radius_factor: float = 1.6  # truncation: R = ceil(radius_factor * m_center)
    observable: Observable | None = None
    coefficient_mode: str = "solver"  # or "synthetic"
    synthetic_coeffs: list | None = None  # [[re, im], ...] unit vector
    synthetic_lambda_frac: float = 0.5
    solver_tol: float = 1e-8
    grid_points: int = 256
    eps_shift: float = 0.05  # shift-range exponent for the strict window check
    strict_sprime: bool = False
    gamma: float | None = None
    gamma_eps: float = 0.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.coefficient_mode not in ("solver", "synthetic"):
            raise ValidationError(f"unknown coefficient mode {self.coefficient_mode!r}")
        if self.observable is None:
            zero = tuple([0] * self.dim)
            one = tuple([1] + [0] * (self.dim - 1))
            mone = tuple([-1] + [0] * (self.dim - 1))
            self.observable = Observable({zero: 1.0, one: 0.5, mone: 0.5})
        if self.phases is None and self.u_matrix is None:
            self.phases = [0.0] * self.n_scatterers
        if self.gamma is None:
            self.gamma = float(GAMMA_BY_DIM[self.dim])

    def config_for(self, positions: np.ndarray) -> ScattererConfig:
        if self.phases is not None:
            return ScattererConfig(self.dim, positions, phases=np.asarray(self.phases))
        mat = np.array([[complex(re, im) for re, im in row] for row in self.u_matrix])
        return ScattererConfig(self.dim, positions, matrix=mat)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "n_scatterers": self.n_scatterers,
            "m_center": self.m_center,
            "seed": self.seed,
            "trials": self.trials,
            "phases": self.phases,
            "u_matrix": self.u_matrix,
            "delta": self.delta,
            "l0_override": self.l0_override,
            "radius_factor": self.radius_factor,
            "observable": self.observable.to_json(),
            "coefficient_mode": self.coefficient_mode,
            "synthetic_coeffs": self.synthetic_coeffs,
            "synthetic_lambda_frac": self.synthetic_lambda_frac,
            "solver_tol": self.solver_tol,
            "grid_points": self.grid_points,
            "eps_shift": self.eps_shift,
            "strict_sprime": self.strict_sprime,
            "gamma": self.gamma,
            "gamma_eps": self.gamma_eps,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrialSpec":
        obj = dict(obj)
        if obj.get("observable") is not None:
            obj["observable"] = Observable.from_json(obj["observable"])
        return cls(**obj)


@dataclass
class RunContext:
    """Immutable per-run data shared by every trial."""

    spec: TrialSpec
    table: SpectrumTable
    interval: GapTriple
    width: float  # annulus half-width L_0
    shells: ShellSums
    radius_sq: int
    zetas: list
    sigma: dict
    sigma_bound: dict
    theory_b: float
    theory_c: float
    annulus_covers_gap: bool
    xi0: tuple

    @classmethod
    def build(cls, spec: TrialSpec) -> "RunContext":
        radius_sq = int(math.ceil(spec.radius_factor * spec.m_center))
        table = enumerate_spectrum(spec.dim, radius_sq)
        interval = table.gap_triple(spec.m_center)
        width = (
            float(spec.l0_override)
            if spec.l0_override is not None
            else (FOUR_PI_SQ * spec.m_center) ** spec.delta
        )
        if spec.strict_sprime:
            params = SPrimeParams(
                delta=spec.delta, eps=spec.eps_shift, c_gap=10.0, c_coeff=10.0
            )
            if not (
                gap_condition(table, spec.m_center, params)
                and coeff_condition(table, spec.m_center, params)
            ):
                raise ValidationError(
                    f"m_center {spec.m_center} rejected by the strict window check"
                )
        shells = ShellSums.get(spec.dim, radius_sq)
        zetas = spec.observable.nonzero_shifts()
        sigma, bound = {}, {}
        for z in zetas:
            sigma[z], bound[z] = sigma_sum(table, interval, width, z)
        theory_b = 1.0 / interval.outer_gap**2
        # complement sum with unit weights: the expectation-level version of
        # the annulus-complement functional at this truncation
        norms = shells.norms
        mask = np.abs(FOUR_PI_SQ * (norms.astype(np.float64) - interval.center)) > width
        masked = norms[mask]
        low = masked < interval.center
        high = masked > interval.next
        tc = math.fsum(
            1.0 / (FOUR_PI_SQ * masked[low].astype(np.float64) - interval.n_center) ** 2
        ) + math.fsum(
            1.0 / (FOUR_PI_SQ * masked[high].astype(np.float64) - interval.n_next) ** 2
        )
        covers = FOUR_PI_SQ * (interval.next - interval.center) <= width
        return cls(
            spec=spec,
            table=table,
            interval=interval,
            width=width,
            shells=shells,
            radius_sq=radius_sq,
            zetas=zetas,
            sigma=sigma,
            sigma_bound=bound,
            theory_b=theory_b,
            theory_c=tc,
            annulus_covers_gap=covers,
            xi0=lex_first_shell_vector(spec.dim, interval.center),
        )


@dataclass
class TrialResult:
    trial_index: int
    no_root: bool = False
    root_count: int = 0
    lambda_norm: float = math.nan
    residual: float = math.nan
    near_degenerate: bool = False
    b_val: float = math.nan
    c_val: float = math.nan
    a_vals: dict = field(default_factory=dict)
    a_weighted: float = math.nan  # sum over shifts of |ahat| * A_zeta
    norm_sq: float = math.nan
    annulus_sq: float = math.nan
    remainder_sq: float = math.nan
    err: float = math.nan
    envelope: float = math.nan
    chain_c_ok: bool = False
    chain_b_ok: bool = False
    chain_ratio_ok: bool = False
    pair_one_exact: bool = False
    endpoint_landing: bool = False
    # threshold events against the running means of preceding usable trials
    event_a_running: bool = False
    event_b_running: bool = False


def run_trial(spec: TrialSpec, trial_index: int, ctx: RunContext) -> TrialResult:
    positions = sample_positions(spec.seed, trial_index, spec.n_scatterers, spec.dim)
    config = spec.config_for(positions)
    interval = ctx.interval

    if spec.coefficient_mode == "solver":
        ws = SecularWorkspace(config, ctx.radius_sq, shells=ctx.shells)
        roots = find_new_eigenvalues(
            config,
            interval,
            TruncationPolicy.by_radius(ctx.radius_sq),
            solver_tol=spec.solver_tol,
            grid_points=spec.grid_points,
            workspace=ws,
        )
        if not roots:
            return TrialResult(trial_index=trial_index, no_root=True)
        root = roots[0]
        lam = SpectralParameter(root.lambda_norm)
        d = root.d
        res = TrialResult(
            trial_index=trial_index,
            root_count=len(roots),
            lambda_norm=root.lambda_norm,
            residual=root.residual,
            near_degenerate=root.near_degenerate,
        )
    else:
        if spec.synthetic_coeffs is None:
            raise ValidationError("synthetic mode needs synthetic_coeffs")
        d = np.array([complex(re, im) for re, im in spec.synthetic_coeffs])
        if d.shape != (spec.n_scatterers,):
            raise ValidationError("synthetic_coeffs must have one entry per scatterer")
        frac = spec.synthetic_lambda_frac
        if not 0.0 < frac < 1.0:
            raise ValidationError("synthetic_lambda_frac must be in (0, 1)")
        lam = SpectralParameter(
            interval.center + frac * (interval.next - interval.center)
        )
        res = TrialResult(
            trial_index=trial_index, root_count=1, lambda_norm=lam.lambda_norm,
            residual=0.0,
        )

    field_ = assemble_field(
        d, positions, lam, TruncationPolicy.by_radius(ctx.radius_sq), shells=ctx.shells
    )
    res.norm_sq = field_.norm_sq
    res.annulus_sq, res.remainder_sq = split_annulus(field_, interval.center, ctx.width)
    res.b_val = functional_B(field_, interval)
    res.c_val = functional_C(field_, interval, ctx.width)
    a_weighted_terms = []
    try:
        for z in ctx.zetas:
            av = functional_A(field_, z, interval, ctx.width)
            res.a_vals[z] = av
            a_weighted_terms.append(abs(spec.observable.coeffs[z]) * av)
        res.a_weighted = math.fsum(a_weighted_terms)
    except NonSPrimeError:
        res.endpoint_landing = True
    res.err, res.envelope = equidistribution_error(
        field_, spec.observable, spec.gamma, spec.gamma_eps, spec.n_scatterers
    )
    one = Observable({tuple([0] * spec.dim): 1.0})
    res.pair_one_exact = pair_with_observable(field_, one) == 1.0
    res.chain_c_ok = res.remainder_sq <= res.c_val
    res.chain_b_ok = res.annulus_sq >= res.b_val
    if res.b_val > 0:
        res.chain_ratio_ok = res.remainder_sq / res.norm_sq <= res.c_val / res.b_val
    return res


def run_trials(spec: TrialSpec, threads: int = 1, ctx: RunContext | None = None):
    """Execute all trials; result list is ordered by trial index.

    Trials are independent, so a thread pool may execute them in any order;
    the running-mean event flags are attached afterwards in index order,
    which keeps the output identical for every worker count.
    """
    if ctx is None:
        ctx = RunContext.build(spec)
    if threads <= 1:
        results = [run_trial(spec, i, ctx) for i in range(spec.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: run_trial(spec, i, ctx), range(spec.trials)))
    results.sort(key=lambda r: r.trial_index)
    for r, flags in zip(results, running_event_flags(results, c0=2.0)):
        r.event_a_running = flags["event_a"]
        r.event_b_running = flags["event_b"]
    return results, ctx


def _mean_se(values: list[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_expectations(results: list[TrialResult], ctx: RunContext, min_trials: int = 30) -> dict:
    """Empirical means with standard errors next to the closed-form columns."""
    used = [r for r in results if not r.no_root and not r.endpoint_landing]
    if len(used) < min_trials:
        raise ValidationError(f"need >= {min_trials} usable trials, got {len(used)}")
    out = {"trials_used": len(used)}
    b_mean, b_se = _mean_se([r.b_val for r in used])
    c_mean, c_se = _mean_se([r.c_val for r in used])
    out["B"] = {
        "mean": b_mean,
        "stderr": b_se,
        "theory": ctx.theory_b,
        "ratio": b_mean / ctx.theory_b,
    }
    out["C"] = {
        "mean": c_mean,
        "stderr": c_se,
        "theory": ctx.theory_c,
        "ratio": c_mean / ctx.theory_c if ctx.theory_c > 0 else math.nan,
    }
    out["A"] = {}
    for z in ctx.zetas:
        vals = [r.a_vals[z] for r in used]
        mean, se = _mean_se(vals)
        theory = ctx.sigma[z]
        out["A"][",".join(str(c) for c in z)] = {
            "mean": mean,
            "stderr": se,
            "theory": theory,
            "ratio": mean / theory if theory > 0 else math.nan,
        }
    out["coeff_sq_at_xi0"] = {
        "mean": b_mean * ctx.interval.outer_gap**2,
        "stderr": b_se * ctx.interval.outer_gap**2,
    }
    return out


def event_frequencies(
    results: list[TrialResult],
    c0_values,
    n_scatterers: int,
    ref_means: dict | None = None,
    min_trials: int = 500,
) -> dict:
    """Frequencies of the threshold events against reference means.

    With ref_means from an independent run (different seed) the counting is
    free of selection bias; otherwise the same sample's means are used.
    Markov's bound 1 - 1/C0 applies to any nonnegative functional; the
    lower-tail event uses the gap functional with threshold mean/3 and
    reference probability 9/(14 N).
    """
    used = [r for r in results if not r.no_root and not r.endpoint_landing]
    if len(used) < min_trials:
        raise ValidationError(f"need >= {min_trials} usable trials, got {len(used)}")
    if ref_means is None:
        a_ref = _mean_se([r.a_weighted for r in used])[0]
        b_ref = _mean_se([r.b_val for r in used])[0]
        c_ref = _mean_se([r.c_val for r in used])[0]
    else:
        a_ref, b_ref, c_ref = ref_means["A_a"], ref_means["B"], ref_means["C"]
    n = len(used)

    def freq_se(k):
        p = k / n
        return p, math.sqrt(p * (1.0 - p) / n)

    out = {
        "trials_used": n,
        "ref_means": {"A_a": a_ref, "B": b_ref, "C": c_ref},
        "markov_A": {},
        "markov_C": {},
    }
    for c0 in c0_values:
        k = sum(1 for r in used if r.a_weighted <= c0 * a_ref)
        p, se = freq_se(k)
        out["markov_A"][f"{c0:g}"] = {"freq": p, "stderr": se, "bound": 1.0 - 1.0 / c0}
        k = sum(1 for r in used if r.c_val <= c0 * c_ref)
        p, se = freq_se(k)
        out["markov_C"][f"{c0:g}"] = {"freq": p, "stderr": se, "bound": 1.0 - 1.0 / c0}
    k = sum(1 for r in used if r.b_val > b_ref / 3.0)
    p, se = freq_se(k)
    out["B_above_third"] = {
        "freq": p,
        "stderr": se,
        "bound": 9.0 / (14.0 * n_scatterers),
    }
    return out


def running_event_flags(results: list[TrialResult], c0: float) -> list[dict]:
    """Per-trial event flags against the running means of usable trials."""
    flags = []
    a_sum = b_sum = 0.0
    count = 0
    for r in sorted(results, key=lambda t: t.trial_index):
        if r.no_root or r.endpoint_landing:
            flags.append({"event_a": False, "event_b": False, "counted": False})
            continue
        a_sum += r.a_weighted
        b_sum += r.b_val
        count += 1
        flags.append(
            {
                "event_a": r.a_weighted <= c0 * (a_sum / count),
                "event_b": r.b_val > (b_sum / count) / 3.0,
                "counted": True,
            }
        )
    return flags


def err_quantiles(results: list[TrialResult]) -> dict:
    used = sorted(r.err for r in results if not r.no_root)
    if not used:
        return {"median": math.nan, "q10": math.nan, "q90": math.nan, "count": 0}
    arr = np.array(used)
    return {
        "median": float(np.quantile(arr, 0.5)),
        "q10": float(np.quantile(arr, 0.1)),
        "q90": float(np.quantile(arr, 0.9)),
        "count": len(used),
    }


# -- scaling arithmetic ----------------------------------------------------


def scaling_map(energy, length):
    """Spectral parameter of the unit-torus problem: lambda = E * L^2."""
    if energy <= 0 or length <= 0:
        raise ValidationError("energy and length must be positive")
    return energy * length * length


def energy_from(lam_physical, length):
    if length <= 0:
        raise ValidationError("length must be positive")
    return lam_physical / (length * length)


def length_from(lam_physical, energy):
    if energy <= 0 or lam_physical <= 0:
        raise ValidationError("inputs must be positive")
    return math.sqrt(lam_physical / energy)


def threshold_arithmetic(energy, rho, gamma_d, d: int, eps=0):
    """(alpha_d, beta_d, threshold) with alpha = (2 gamma - eps)/(3d + 4 gamma - eps),
    beta = 1/(3d + 4 gamma - eps), threshold = E^alpha * rho^{-beta}.

    The threshold number doubles as the localization-length lower-bound
    figure.  Exact over Fraction inputs for the exponents.
    """
    if d not in (2, 3):
        raise ValidationError("dimension must be 2 or 3")
    denom = 3 * d + 4 * gamma_d - eps
    if denom <= 0:
        raise ValidationError("exponent denominator must be positive")
    num = 2 * gamma_d - eps
    if num <= 0:
        raise ValidationError("numerator 2*gamma - eps must be positive")
    if isinstance(gamma_d, Fraction) or isinstance(eps, Fraction):
        alpha = Fraction(num) / Fraction(denom)
        beta = Fraction(1) / Fraction(denom)
    else:
        alpha = num / denom
        beta = 1.0 / denom
    if energy <= 0 or rho <= 0:
        raise ValidationError("energy and density must be positive")
    threshold = float(energy) ** float(alpha) * float(rho) ** (-float(beta))
    return alpha, beta, threshold


def consistency_gamma2(theta, delta_choice=None):
    """gamma = delta - theta/2 at the extremal delta = 1/2 - theta.

    Exact over Fractions; decreasing in theta.
    """
    if isinstance(theta, Fraction):
        half = Fraction(1, 2)
        theta_half = theta / 2
    else:
        half = 0.5
        theta_half = theta / 2.0
    if delta_choice is None:
        delta_choice = half - theta
    return delta_choice - theta_half
