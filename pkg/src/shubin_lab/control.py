"""Fractional Shubin heat semigroup, HUM and Lebeau-Robbiano null-controls.

Everything is diagonal in the eigenbasis: the free flow multiplies mode n by
exp(-t lambda_n^s), and the only coupling between modes is the Gram matrix of
the control region.  With u(t) = 1_omega sum_j phi_j exp(-a_j (T - t)) psi_j
(a_j = lambda_j^s) every time integral has a closed form:

    int_0^T exp(-(a_i + a_j)(T - t)) dt = (1 - exp(-(a_i + a_j) T)) / (a_i + a_j)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .geometry import LineRegion
from .operator import EigenBasis
from .spectral import SpectralSubspace, gram_on_region

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
SAMPLES_PER_PHASE = 512


class ControlError(ArithmeticError):
    pass


class IllConditionedGramian(ControlError):
    pass


class NonConvergence(ControlError):
    def __init__(self, msg, residuals):
        super().__init__(msg)
        self.residuals = residuals


def _kernel(a: np.ndarray, b: np.ndarray, tau: float) -> np.ndarray:
    """(1 - exp(-(a_i + b_j) tau)) / (a_i + b_j), via expm1 for small arguments."""
    s = a[:, None] + b[None, :]
    return -np.expm1(-s * tau) / s


@dataclass(frozen=True)
class SemigroupState:
    coeffs: np.ndarray
    t: float
    rates: np.ndarray  # lambda_n^s

    @classmethod
    def initial(cls, basis: EigenBasis, coeffs) -> "SemigroupState":
        c = np.asarray(coeffs, dtype=float)
        return cls(c, 0.0, basis.powered()[: c.size])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def propagate(state: SemigroupState, dt: float) -> SemigroupState:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return SemigroupState(state.coeffs * np.exp(-dt * state.rates), state.t + dt, state.rates)


@dataclass
class DissipationReport:
    verdict: str
    max_violation: float
    checked: int


def dissipation_check(basis: EigenBasis, cutoffs, times, probes, slack: float = 1e-12) -> DissipationReport:
    """||(1 - pi_lambda) e^{-tH^s} g|| <= e^{-t lambda^s} ||g|| over all (lambda, t, g)."""
    rates = basis.powered()
    worst, count = -math.inf, 0
    for g in probes:
        g = np.asarray(g, dtype=float)
        r = rates[: g.size]
        gn = np.linalg.norm(g)
        for lam in np.atleast_1d(cutoffs):
            high = basis.eigenvalues[: g.size] > lam
            for t in np.atleast_1d(times):
                lhs = np.linalg.norm(g[high] * np.exp(-t * r[high]))
                rhs = math.exp(-t * lam ** basis.params.s) * gn
                worst = max(worst, lhs - rhs)
                count += 1
    return DissipationReport(PASS if worst <= slack else FAIL, float(worst), count)


@dataclass
class ControlProblem:
    """Null-control of ``f' + H^s f = 1_omega u`` on ``[0, T]``.

    ``gram`` is the region Gram matrix on the full working basis (``len(f0)``
    modes); HUM controls live in the first ``n_control`` modes.
    """

    T: float
    basis: EigenBasis
    region: LineRegion
    f0: np.ndarray
    n_control: int
    gram: np.ndarray = None
    factor: np.ndarray | None = None  # upper triangular F with gram = F^T F

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        self.f0 = np.asarray(self.f0, dtype=float)
        if not 1 <= self.n_control <= self.f0.size:
            raise ValueError("control truncation must lie in [1, len(f0)]")
        if self.region.measure <= 0:
            raise ValueError("control region must have positive measure")
        if self.gram is None:
            sub = SpectralSubspace.first(self.basis, self.f0.size)
            g = gram_on_region(self.basis, sub, self.region)
            self.gram, self.factor = g.matrix, g.factor

    @property
    def rates(self) -> np.ndarray:
        return self.basis.powered()[: self.f0.size]


def hum_gramian(problem: ControlProblem, n: int | None = None, T: float | None = None,
                tol: float = 1e-10) -> np.ndarray:
    """Controllability Gramian Lambda_ij = G_ij (1 - e^{-(a_i+a_j)T}) / (a_i + a_j) on the first ``n`` modes."""
    n = problem.n_control if n is None else n
    T = problem.T if T is None else T
    a = problem.rates[:n]
    lam = problem.gram[:n, :n] * _kernel(a, a, T)
    lam = (lam + lam.T) / 2
    lo = np.linalg.eigvalsh(lam)[0]
    if lo < -tol * np.abs(lam).max():
        raise ControlError(f"Gramian indefinite (min eigenvalue {lo:.3e}): quadrature or truncation fault")
    return lam


@dataclass
class Phase:
    t_start: float
    t_end: float
    kind: str  # "active" or "passive"
    cutoff: float | None = None
    n_modes: int = 0
    phi: np.ndarray | None = None
    cost: float = 0.0
    cond: float = math.nan
    residual: float = math.nan  # full-basis norm at t_end

    def control_samples(self, samples: int = SAMPLES_PER_PHASE, rates: np.ndarray | None = None):
        """Time grid and coefficients phi_j exp(-a_j (t_end - t)) of the control before 1_omega."""
        t = np.linspace(self.t_start, self.t_end, samples)
        if self.kind != "active":
            return t, np.zeros((samples, 0))
        return t, self.phi[None, :] * np.exp(-np.outer(self.t_end - t, rates[: self.n_modes]))

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "kind": self.kind, "cutoff": self.cutoff,
                "n_modes": self.n_modes, "cost": self.cost, "cond": self.cond, "residual": self.residual}


@dataclass
class ControlSchedule:
    T: float
    phases: list[Phase]
    final_state: np.ndarray
    rates: np.ndarray
    residual_trace: list[float] = field(default_factory=list)
    f0_norm: float = 1.0

    @property
    def cost(self) -> float:
        return float(sum(p.cost for p in self.phases))

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.final_state))

    def trajectory_rows(self, samples: int = SAMPLES_PER_PHASE):
        for ph in self.phases:
            if ph.kind != "active":
                continue
            t, u = ph.control_samples(samples, self.rates)
            for i, ti in enumerate(t):
                for j in range(ph.n_modes):
                    yield float(ti), j, float(u[i, j])

    def to_dict(self) -> dict:
        return {"T": self.T, "cost": self.cost, "residual": self.residual, "f0_norm": self.f0_norm,
                "residual_trace": list(self.residual_trace), "phases": [p.to_dict() for p in self.phases]}


def _active_step(state: np.ndarray, gram: np.ndarray, rates: np.ndarray, n: int, tau: float,
                 max_cond: float) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Steer the first ``n`` modes of ``state`` to zero in time ``tau``; return the full new state."""
    a = rates[:n]
    lam = gram[:n, :n] * _kernel(a, a, tau)
    lam = (lam + lam.T) / 2
    w = np.linalg.eigvalsh(lam)
    cond = float(w[-1] / w[0]) if w[0] > 0 else math.inf
    if not cond <= max_cond:
        raise IllConditionedGramian(
            f"Gramian condition number {cond:.3e} exceeds {max_cond:.1e}; lower the control truncation or enlarge omega"
        )
    target = -np.exp(-tau * a) * state[:n]
    cho = linalg.cho_factor(lam)
    phi = linalg.cho_solve(cho, target)
    # one step of iterative refinement
    phi += linalg.cho_solve(cho, target - lam @ phi)
    new = np.exp(-tau * rates) * state + (gram[:, :n] * _kernel(rates, a, tau)) @ phi
    return new, phi, float(phi @ lam @ phi), cond


def hum_control(problem: ControlProblem, max_cond: float = 1e12) -> ControlSchedule:
    """Minimum-energy control steering the first ``n_control`` modes to zero at time T."""
    n = problem.n_control
    state, phi, cost, cond = _active_step(problem.f0, problem.gram, problem.rates, n, problem.T, max_cond)
    ph = Phase(0.0, problem.T, "active", float(problem.basis.eigenvalues[n - 1]), n, phi, cost, cond,
               float(np.linalg.norm(state)))
    return ControlSchedule(problem.T, [ph], state, problem.rates, [ph.residual], float(np.linalg.norm(problem.f0)))


def truncated_residual(schedule: ControlSchedule, n: int) -> float:
    return float(np.linalg.norm(schedule.final_state[:n]))


def lr_synthesize(problem: ControlProblem, mu: float | None = None, growth: float = 2.0, split: float = 0.5,
                  c: float = 0.5, tol: float = 1e-6, j_max: int = 30, max_cond: float = 1e12) -> ControlSchedule:
    """Lebeau-Robbiano schedule: phase j lasts tau_j = c T growth^-j; its first ``split``
    fraction steers modes with lambda <= mu growth^j to zero, the rest is free decay.

    Stops once the full-basis residual is at most ``tol * ||f0||``; the leftover
    time up to T is a final passive phase.
    """
    basis = problem.basis
    lam_all = basis.eigenvalues[: problem.f0.size]
    if mu is None:
        mu = float(lam_all[min(4, lam_all.size - 1)])
    rates = problem.rates
    state = problem.f0.copy()
    f0n = float(np.linalg.norm(state))
    phases: list[Phase] = []
    trace: list[float] = []
    t = 0.0
    if f0n == 0:
        return ControlSchedule(problem.T, [Phase(0.0, problem.T, "passive", residual=0.0)], state, rates, [0.0], 0.0)
    for j in range(j_max + 1):
        if np.linalg.norm(state) <= tol * f0n:
            break
        tau = c * problem.T * growth ** (-j)
        cutoff = mu * growth ** j
        n = int(np.count_nonzero(lam_all <= cutoff))
        n = max(1, min(n, problem.n_control))
        t_act = tau * split
        state, phi, cost, cond = _active_step(state, problem.gram, rates, n, t_act, max_cond)
        phases.append(Phase(t, t + t_act, "active", cutoff, n, phi, cost, cond, float(np.linalg.norm(state))))
        t += t_act
        state = np.exp(-(tau - t_act) * rates) * state
        phases.append(Phase(t, t + tau - t_act, "passive", residual=float(np.linalg.norm(state))))
        t += tau - t_act
        trace.append(float(np.linalg.norm(state)))
    else:
        if np.linalg.norm(state) > tol * f0n:
            raise NonConvergence(f"residual {np.linalg.norm(state):.3e} after {j_max} phases", trace)
    if t < problem.T:
        state = np.exp(-(problem.T - t) * rates) * state
        phases.append(Phase(t, problem.T, "passive", residual=float(np.linalg.norm(state))))
        trace.append(float(np.linalg.norm(state)))
    return ControlSchedule(problem.T, phases, state, rates, trace, f0n)


def simulate_fine(problem: ControlProblem, schedule: ControlSchedule, steps_per_phase: int = 400,
                  order: int = 8) -> np.ndarray:
    """Re-simulate a schedule with exact free flow per step and Gauss-Legendre forcing integrals.

    Independent of the closed-form phase update: each step of length h adds
    int_0^h e^{-a (h - r)} G u(t + r) dr evaluated by quadrature.
    """
    rates = problem.rates
    state = problem.f0.astype(float).copy()
    nodes, weights = np.polynomial.legendre.leggauss(order)
    for ph in schedule.phases:
        if ph.kind != "active":
            state = np.exp(-(ph.t_end - ph.t_start) * rates) * state
            continue
        a_j = rates[: ph.n_modes]
        g = problem.gram[:, : ph.n_modes]
        h = (ph.t_end - ph.t_start) / steps_per_phase
        for k in range(steps_per_phase):
            t0 = ph.t_start + k * h
            r = h * (nodes + 1) / 2
            u = ph.phi[None, :] * np.exp(-np.outer(ph.t_end - (t0 + r), a_j))
            forcing = (np.exp(-np.outer(h - r, rates)) * (u @ g.T) * (weights * h / 2)[:, None]).sum(axis=0)
            state = np.exp(-h * rates) * state + forcing
    return state


def _equilibrated(lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """S Lambda S with unit diagonal and the scaling S.  By Schur's product theorem the
    scaled Gramian has lambda_min >= lambda_min(G), whatever the time scales."""
    d = 1 / np.sqrt(np.diag(lam))
    return lam * np.outer(d, d), d


def time_rule(T: float, rate_max: float, order: int = 20, split: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, T] graded towards t = 0 so that exp(-2 rate_max t) is resolved."""
    edges = [T]
    while edges[-1] * rate_max > 0.05 and len(edges) < 200:
        edges.append(edges[-1] / 2)
    edges.append(0.0)
    edges = np.array(edges[::-1])
    fine = np.concatenate([np.linspace(a, b, split + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])] + [[T]])
    t, w = np.polynomial.legendre.leggauss(order)
    half = np.diff(fine)[:, None] / 2
    mid = (fine[:-1] + fine[1:])[:, None] / 2
    return (mid + half * t).ravel(), (half * w).ravel()


def observability_constant(problem: ControlProblem, n: int | None = None, T: float | None = None) -> float:
    """max over g of ||e^{-TH^s} g||^2 / int_0^T ||e^{-tH^s} g||_omega^2 dt on the first ``n`` modes.

    With a Gram factor F the denominator is kept as ||M g||^2 where M stacks
    sqrt(w_q) F e^{-t_q A} over a time rule, so only its R factor is ever
    formed and the answer is sigma_max(R^-T E)^2.  Without a factor the closed
    form Gramian is Cholesky-factorised after diagonal equilibration.
    """
    n = problem.n_control if n is None else n
    T = problem.T if T is None else T
    a = problem.rates[:n]
    e = np.exp(-T * a)
    if problem.factor is not None:
        d = 1 / np.sqrt(np.diag(hum_gramian(problem, n, T, tol=math.inf)))
        t, w = time_rule(T, float(a.max()))
        F = problem.factor[:n, :n]
        M = (np.sqrt(w)[:, None, None] * F[None] * (np.exp(-np.outer(t, a)) * d)[:, None, :]).reshape(-1, n)
        R = linalg.qr(M, mode="r")[0][:n]
        X = linalg.solve_triangular(R, np.diag(d * e), trans="T", lower=False)
        return float(linalg.svdvals(X)[0] ** 2)
    B, d = _equilibrated(hum_gramian(problem, n, T))
    try:
        L = linalg.cholesky(B, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditionedGramian("observability Gramian not positive definite") from exc
    M = linalg.solve_triangular(L, np.diag(d * e), lower=True)
    return float(linalg.svdvals(M)[0] ** 2)


def worst_hum_cost(problem: ControlProblem, n: int | None = None, T: float | None = None) -> float:
    """max over unit f0 of the HUM cost f0^T E Lambda^{-1} E f0 (eigendecomposition route)."""
    n = problem.n_control if n is None else n
    T = problem.T if T is None else T
    lam, d = _equilibrated(hum_gramian(problem, n, T))
    w, v = np.linalg.eigh(lam)
    if w[0] <= 0:
        raise IllConditionedGramian("HUM Gramian not positive definite")
    K = (v * (1 / np.sqrt(w))) @ v.T  # scaled Lambda^{-1/2}
    M = K * (d * np.exp(-T * problem.rates[:n]))[None, :]
    return float(np.linalg.eigvalsh(M.T @ M)[-1])


@dataclass
class BlowupFit:
    T: np.ndarray
    C_obs: np.ndarray
    power: float
    slope: float
    intercept: float
    r2: float
    verdict: str
    tail_max: float = math.nan
    median: float = math.nan


def blowup_power(s: float, a: float) -> float:
    """Exponent a / (s - a) of 1/T in the observability cost."""
    if not s > a:
        raise ValueError(f"need s > a, got s={s}, a={a}")
    return a / (s - a)


def fit_blowup(T, C_obs, power: float, r2_min: float = 0.9) -> BlowupFit:
    """Least squares log C_obs = intercept + slope * T^(-power), plus boundedness of
    log C_obs / T^(-power) over the smallest third of the horizons (where C_obs > 1).

    PASS needs slope > 0, R^2 >= ``r2_min`` and a bounded tail (max <= 2 x median).
    """
    T = np.asarray(T, dtype=float)
    C_obs = np.asarray(C_obs, dtype=float)
    if T.max() / T.min() < 10 ** 1.5 or T.size < 3:
        return BlowupFit(T, C_obs, power, math.nan, math.nan, math.nan, INCONCLUSIVE)
    x = T ** (-power)
    y = np.log(C_obs)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ [slope, icpt]) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    order = np.argsort(x)
    pos = order[y[order] > 0]
    tail_max = med = math.nan
    bounded = False
    if pos.size >= 3:
        series = y[pos] / x[pos]
        tail_max = float(series[len(series) - max(1, len(series) // 3):].max())
        med = float(np.median(series))
        bounded = tail_max <= 2 * med
    verdict = PASS if slope > 0 and r2 >= r2_min and bounded else FAIL
    return BlowupFit(T, C_obs, power, float(slope), float(icpt), float(r2), verdict, tail_max, med)


def cost_blowup_study(problem: ControlProblem, T_grid, eps: float = 0.05, r2_min: float = 0.9) -> BlowupFit:
    """Observability constant over ``T_grid`` against the predicted T^(-a/(s-a)), a = s* + eps."""
    params = problem.basis.params
    power = blowup_power(params.s, params.s_star + eps)
    C = [observability_constant(problem, T=float(T)) for T in T_grid]
    return fit_blowup(T_grid, C, power, r2_min)
