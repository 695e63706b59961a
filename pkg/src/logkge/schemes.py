"""Two energy-conserving time steppers for the regularized log wave equation.

Both schemes advance the two-layer recurrence

    (u^{n+1} - 2u^n + u^{n-1})/tau^2 + (implicit terms) = 0

on a periodic grid.  The fully implicit scheme ("cnfd") averages the
Laplacian and the mass term over the outer layers n+1 and n-1:

    d2t u - 1/2 lap(u^{n+1} + u^{n-1}) + 1/2 (u^{n+1} + u^{n-1})
        + lam * DG(u^{n+1}, u^{n-1}) = 0,

while the semi-implicit scheme ("siefd") keeps the Laplacian explicit on the
middle layer, making its implicit system nodewise scalar:

    d2t u - lap u^n + 1/2 (u^{n+1} + u^{n-1}) + lam * DG(u^{n+1}, u^{n-1}) = 0.

``DG`` is the two-point discrete gradient of the regularized log potential,
the ingredient that gives each scheme an exactly conserved discrete energy
(see :func:`discrete_energy`).  Each step is a smooth nonlinear root-finding
problem solved by Newton with the analytic Jacobian: a cyclic tridiagonal
matrix for cnfd, a diagonal one for siefd.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .grid import (
    Grid1D,
    GridFunction,
    forward_diff,
    inner,
    laplacian,
    norm_l2,
    norm_linf,
    seminorm_h1,
)
from .nonlinearity import (
    NonlinearityParams,
    discrete_gradient,
    discrete_gradient_dz1,
    reg_log,
    reg_log_primitive,
)

__all__ = [
    "SCHEMES",
    "StepperConfig",
    "InitialData",
    "WaveState",
    "NonConvergenceError",
    "StabilityWarning",
    "first_step",
    "cnfd_step",
    "siefd_step",
    "step",
    "assemble_residual",
    "solve_newton",
    "discrete_energy",
    "solve_cyclic_tridiag",
    "evolve",
    "EvolveResult",
]

SCHEMES = ("cnfd", "siefd")


class NonConvergenceError(RuntimeError):
    """Implicit solve failed to reach tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class StabilityWarning(UserWarning):
    """Emitted when a siefd run starts above its predicted stable time step."""


@dataclass(frozen=True)
class StepperConfig:
    scheme: str
    tau: float
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    fallback: str = "damped-fixed-point"  # or "fail"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not 0.0 < self.newton_tol <= 1e-6:
            raise ValueError(f"newton_tol must lie in (0, 1e-6], got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.fallback not in ("damped-fixed-point", "fail"):
            raise ValueError(f"unknown fallback {self.fallback!r}")


@dataclass(frozen=True)
class InitialData:
    phi: GridFunction
    gamma: GridFunction

    def __post_init__(self):
        if len(self.phi) != len(self.gamma):
            raise ValueError("phi and gamma must live on the same grid")


@dataclass(frozen=True)
class WaveState:
    """Two consecutive layers (u^{n-1}, u^n) of a trajectory, t = n*tau."""

    prev: GridFunction
    curr: GridFunction
    n: int
    t: float
    newton_iters: int = 0

    def __post_init__(self):
        if len(self.prev) != len(self.curr):
            raise ValueError("both layers must live on the same grid")


def first_step(
    init: InitialData, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> WaveState:
    """Taylor start: u^1 = phi + tau*gamma + tau^2/2 * u_tt(0) evaluated nodewise."""
    phi, gamma = init.phi.core, init.gamma.core
    lap_phi = laplacian(init.phi, g).core
    accel = lap_phi - phi - p.lam * phi * reg_log(phi * phi, p)
    u1 = phi + cfg.tau * gamma + 0.5 * cfg.tau**2 * accel
    return WaveState(prev=init.phi, curr=GridFunction.from_core(u1), n=1, t=cfg.tau)


def _lap_core(v: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / h**2


def _residual_core(
    cand: np.ndarray, state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> np.ndarray:
    up, uc = state.prev.core, state.curr.core
    tau2 = cfg.tau**2
    d2t = (cand - 2.0 * uc + up) / tau2
    nonlin = p.lam * discrete_gradient(cand, up, p)
    if cfg.scheme == "cnfd":
        diff = -0.5 * _lap_core(cand + up, g.h)
    else:
        diff = -_lap_core(uc, g.h)
    return d2t + diff + 0.5 * (cand + up) + nonlin


def _rhs_scale(state: WaveState, cfg: StepperConfig, g: Grid1D) -> float:
    """l2 norm of the candidate-independent part of the residual equation."""
    up, uc = state.prev.core, state.curr.core
    tau2 = cfg.tau**2
    b = (2.0 * uc - up) / tau2 - 0.5 * up
    if cfg.scheme == "cnfd":
        b = b + 0.5 * _lap_core(up, g.h)
    else:
        b = b + _lap_core(uc, g.h)
    return float(np.sqrt(g.h * np.sum(b * b)))


def assemble_residual(
    candidate: GridFunction,
    state: WaveState,
    p: NonlinearityParams,
    cfg: StepperConfig,
    g: Grid1D,
) -> GridFunction:
    """Left-hand side of the scheme equation at a trial layer u^{n+1}."""
    if len(candidate) != g.N + 1 or len(state.curr) != g.N + 1:
        raise ValueError("candidate/state do not match the grid")
    return GridFunction.from_core(_residual_core(candidate.core, state, p, cfg, g))


def solve_cyclic_tridiag(diag: np.ndarray, off: float, rhs: np.ndarray) -> np.ndarray:
    """Solve the periodic tridiagonal system with constant off-diagonal.

    The matrix has ``diag`` on the diagonal and ``off`` on the two
    off-diagonals including the periodic corner entries (0, N-1) and
    (N-1, 0).  Solved as a plain tridiagonal banded factorization plus a
    Sherman-Morrison rank-one correction for the corners; O(N) total.
    """
    n = diag.size
    if n < 3:
        raise ValueError("cyclic tridiagonal solve needs at least 3 unknowns")
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= off * off / gamma

    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = d
    ab[2, :-1] = off

    u = np.zeros(n)
    u[0] = gamma
    u[-1] = off
    sol = solve_banded((1, 1), ab, np.column_stack([rhs, u]))
    y, q = sol[:, 0], sol[:, 1]
    # v = e_0 + (off/gamma) e_{N-1} closes the rank-one update A = T + u v^T
    vy = y[0] + off / gamma * y[-1]
    vq = q[0] + off / gamma * q[-1]
    return y - q * (vy / (1.0 + vq))


def _newton(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> tuple[np.ndarray, list[float]]:
    """Newton iteration for the next layer; returns (layer, residual norms).

    Initial guess is the linear extrapolation 2u^n - u^{n-1}; stopping rule
    ||R|| <= newton_tol * (1 + ||b||) with b the candidate-independent part
    of the equation.  A nonpositive Jacobian diagonal or a blown iteration
    cap falls back to a damped fixed-point sweep when enabled.
    """
    up, uc = state.prev.core, state.curr.core
    tau2 = cfg.tau**2
    tol = cfg.newton_tol * (1.0 + _rhs_scale(state, cfg, g))
    lin_diag = 1.0 / tau2 + 0.5 + (1.0 / g.h**2 if cfg.scheme == "cnfd" else 0.0)

    cand = 2.0 * uc - up
    res = _residual_core(cand, state, p, cfg, g)
    norms = [float(np.sqrt(g.h * np.sum(res * res)))]
    if norms[-1] <= tol:
        return cand, norms

    for _ in range(cfg.newton_max_iter):
        jac_diag = lin_diag + p.lam * discrete_gradient_dz1(cand, up, p)
        if np.any(jac_diag <= 0.0) or not np.all(np.isfinite(jac_diag)):
            break
        if cfg.scheme == "cnfd":
            delta = solve_cyclic_tridiag(jac_diag, -0.5 / g.h**2, -res)
        else:
            delta = -res / jac_diag
        cand = cand + delta
        res = _residual_core(cand, state, p, cfg, g)
        norms.append(float(np.sqrt(g.h * np.sum(res * res))))
        if not np.isfinite(norms[-1]):
            break
        if norms[-1] <= tol:
            return cand, norms

    if cfg.fallback == "fail":
        raise NonConvergenceError(
            f"Newton did not reach {tol:.3e} after {len(norms) - 1} iterations "
            f"(last residual {norms[-1]:.3e})",
            residual=norms[-1],
        )

    # Damped fixed-point fallback: the iteration map solves with the
    # nonlinear diagonal clamped so the operator stays positive, and each
    # step is halved until the residual actually decreases.
    cand = 2.0 * uc - up
    res = _residual_core(cand, state, p, cfg, g)
    rnorm = float(np.sqrt(g.h * np.sum(res * res)))
    norms.append(rnorm)
    for _ in range(20 * cfg.newton_max_iter):
        if not np.isfinite(rnorm):
            break
        if rnorm <= tol:
            return cand, norms
        jac_diag = lin_diag + p.lam * discrete_gradient_dz1(cand, up, p)
        jac_diag = np.where(
            np.isfinite(jac_diag), np.maximum(jac_diag, 0.1 * lin_diag), lin_diag
        )
        if cfg.scheme == "cnfd":
            delta = solve_cyclic_tridiag(jac_diag, -0.5 / g.h**2, -res)
        else:
            delta = -res / jac_diag
        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-12:
            trial = cand + alpha * delta
            trial_res = _residual_core(trial, state, p, cfg, g)
            trial_norm = float(np.sqrt(g.h * np.sum(trial_res * trial_res)))
            if np.isfinite(trial_norm) and trial_norm < rnorm * (1.0 - 1e-4 * alpha):
                cand, res, rnorm = trial, trial_res, trial_norm
                accepted = True
                break
            alpha *= 0.5
        norms.append(rnorm)
        if not accepted:
            break
    raise NonConvergenceError(
        f"implicit solve stalled at residual {norms[-1]:.3e} (tolerance {tol:.3e})",
        residual=norms[-1],
    )


def solve_newton(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> tuple[GridFunction, list[float]]:
    """Solve the implicit step equation; returns (next layer, residual history)."""
    cand, norms = _newton(state, p, cfg, g)
    return GridFunction.from_core(cand), norms


def _advance(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> WaveState:
    nxt, norms = _newton(state, p, cfg, g)
    return WaveState(
        prev=state.curr,
        curr=GridFunction.from_core(nxt),
        n=state.n + 1,
        t=state.t + cfg.tau,
        newton_iters=len(norms) - 1,
    )


def cnfd_step(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> WaveState:
    if cfg.scheme != "cnfd":
        raise ValueError("cnfd_step requires cfg.scheme == 'cnfd'")
    return _advance(state, p, cfg, g)


def siefd_step(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> WaveState:
    if cfg.scheme != "siefd":
        raise ValueError("siefd_step requires cfg.scheme == 'siefd'")
    return _advance(state, p, cfg, g)


def step(state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D) -> WaveState:
    return _advance(state, p, cfg, g)


def discrete_energy(
    state: WaveState, p: NonlinearityParams, cfg: StepperConfig, g: Grid1D
) -> float:
    """Exactly conserved two-layer energy of the selected scheme.

    With (v, w) = (state.prev, state.curr) playing (u^n, u^{n+1}):

        ||(w - v)/tau||^2 + gradient terms + (||w||^2 + ||v||^2)/2
            + lam * h/2 * sum_j [ V(w_j^2) + V(v_j^2) ]

    where V is the primitive of the regularized log.  The gradient terms are
    the average of the two squared forward-difference norms for cnfd, and
    the sign-indefinite cross product h*sum (D+ w)(D+ v) for siefd (no
    positivity is claimed for the latter).
    """
    v, w = state.prev, state.curr
    kinetic = (norm_l2(GridFunction.from_core((w.core - v.core) / cfg.tau), g)) ** 2
    if cfg.scheme == "cnfd":
        grad = 0.5 * (seminorm_h1(w, g) ** 2 + seminorm_h1(v, g) ** 2)
    else:
        grad = inner(forward_diff(w, g), forward_diff(v, g), g)
    mass = 0.5 * (norm_l2(w, g) ** 2 + norm_l2(v, g) ** 2)
    pot = reg_log_primitive(w.core**2, p) + reg_log_primitive(v.core**2, p)
    return kinetic + grad + mass + p.lam * 0.5 * g.h * float(np.sum(pot))


def siefd_stable_tau(u: GridFunction, p: NonlinearityParams, g: Grid1D) -> float:
    """Predicted stable time step for siefd from the current layer (inf if none)."""
    from .analysis import siefd_tau_bound, sigma_max

    return siefd_tau_bound(g.h, sigma_max(u, p))


@dataclass
class EvolveResult:
    state: WaveState
    energy0: float
    max_rel_drift: float
    steps: int
    newton_total: int
    snapshots: dict[int, GridFunction] = field(default_factory=dict)
    energy_series: list[float] = field(default_factory=list)
    blown_up: bool = False
    growth: float = 1.0

    @property
    def newton_avg(self) -> float:
        return self.newton_total / self.steps if self.steps else 0.0


def evolve(
    init: InitialData,
    p: NonlinearityParams,
    cfg: StepperConfig,
    g: Grid1D,
    n_steps: int,
    snapshot_steps: tuple[int, ...] = (),
    abort_on_growth: float | None = None,
    track_energy: bool = True,
    energy_series: bool = False,
    warn_stability: bool = True,
) -> EvolveResult:
    """Run a trajectory for n_steps time steps from the Taylor first step.

    Tracks the relative drift of the scheme's discrete energy, collects
    snapshots of u^n at the requested step indices, and (for siefd) warns
    once if tau exceeds the stability bound predicted from the initial
    layer.  With ``abort_on_growth`` set, stops early and flags blow-up as
    soon as the sup norm grows past that factor of its initial value.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if cfg.scheme == "siefd" and warn_stability:
        bound = siefd_stable_tau(init.phi, p, g)
        if cfg.tau > bound:
            warnings.warn(
                f"siefd time step tau={cfg.tau:.6g} exceeds the predicted stable "
                f"bound {bound:.6g} for this layer; expect mode growth",
                StabilityWarning,
                stacklevel=2,
            )

    snapshots: dict[int, GridFunction] = {}
    if 0 in snapshot_steps:
        snapshots[0] = init.phi

    state = first_step(init, p, cfg, g)
    if 1 in snapshot_steps:
        snapshots[1] = state.curr

    track_energy = track_energy or energy_series
    e0 = discrete_energy(state, p, cfg, g) if track_energy else 0.0
    series = [e0] if energy_series else []
    drift = 0.0
    newton_total = 0
    u0_inf = max(norm_linf(init.phi, g), 1e-300)
    growth = norm_linf(state.curr, g) / u0_inf
    blown = abort_on_growth is not None and growth > abort_on_growth

    while state.n < n_steps and not blown:
        state = _advance(state, p, cfg, g)
        newton_total += state.newton_iters
        if track_energy:
            e = discrete_energy(state, p, cfg, g)
            drift = max(drift, abs(e - e0) / (1.0 + abs(e0)))
            if energy_series:
                series.append(e)
        if state.n in snapshot_steps:
            snapshots[state.n] = state.curr
        if abort_on_growth is not None:
            growth = max(growth, norm_linf(state.curr, g) / u0_inf)
            if not np.isfinite(growth) or growth > abort_on_growth:
                blown = True

    return EvolveResult(
        state=state,
        energy0=e0,
        max_rel_drift=drift,
        steps=state.n,
        newton_total=newton_total,
        snapshots=snapshots,
        energy_series=series,
        blown_up=blown,
        growth=growth,
    )
