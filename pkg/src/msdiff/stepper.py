"""Implicit time stepping in entropy variables.

One step of the scheme solves, for the new entropy-variable field w, the
cell-centered system

    (1/tau) (c(w) - c_prev, v)  +  (B(w) grad w, grad v)
        + eps ((L w, L v) + (w, v))  =  (r(c(w)), v)

for all test fields v, with zero-flux walls.  The nonlinearity is handled
by freezing the mobility, the production term and the concentration map at
the current iterate and solving the resulting symmetric positive definite
banded system.  Iterating that frozen map as written is hopelessly slow
when the regularization weight is small, because the only w-dependence left
on the diagonal is the eps block; the fixed-point update here therefore
adds the state-derivative mass term (h/tau) Hinv(w_bar) (w - w_bar) to both
sides.  The added term vanishes identically at any fixed point, so the
solved states are the same, but the iteration gains Newton-like local
convergence.  ``assemble_linear_system`` still exposes the plain frozen
system for inspection.

Unknowns are ordered cell-major (all species of cell 0, then cell 1, ...),
which keeps the matrix banded with half-bandwidth 2N: couplings reach one
cell for the mobility stiffness and two cells for the bilaplacian
regularization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solveh_banded

from .diagnostics import (
    AuditVerdict,
    DiagnosticsRecord,
    audit_step,
    dissipation,
    entropy_functional,
    relative_entropy,
    solver_slack,
)
from .errors import (
    AuditFailure,
    DimensionMismatch,
    InadmissibleInitialData,
    LinearSolveFailure,
    NonlinearDivergence,
    SimulationAborted,
    ValidationError,
)
from .grid import Grid1D, integrate, laplacian_squared_lower_bands, neumann_laplacian
from .mixture import (
    MixtureSpec,
    c_to_w,
    entropy_hessian_inverse,
    full_concentrations,
    mobility_matrix,
    production_rates,
    w_to_c,
)

# Final fixed-point increments must sit near rounding level for the
# telescoped mass identity to hold to 1e-10 over thousands of steps.
POLISH_INCREMENT = 1e-13

StepHook = Callable[[int, float, np.ndarray, np.ndarray, DiagnosticsRecord], None]


@dataclass(frozen=True)
class SchemeParams:
    """Knobs of the implicit scheme.

    tau            time step
    t_end          final time (the last step is shortened to land on it)
    eps            regularization weight; must be positive to run
    picard_tol     max-norm increment below which the inner solve stops
    picard_max     total inner-iteration budget per step, restarts included
    damping_theta  under-relaxation of the fixed-point update, in (0, 1]
    eta_floor      initial-data blending weight toward the uniform mixture
    final_polish   after convergence, push increments to rounding level so
                   the per-step mass identity telescopes exactly
    """

    tau: float
    t_end: float
    eps: float = 1e-8
    picard_tol: float = 1e-10
    picard_max: int = 200
    damping_theta: float = 1.0
    eta_floor: float = 1e-8
    final_polish: bool = True

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValidationError("tau", "must be positive")
        if self.t_end < 0.0:
            raise ValidationError("t_end", "must be nonnegative")
        if self.eps < 0.0:
            raise ValidationError("eps", "must be nonnegative")
        if not self.picard_tol > 0.0:
            raise ValidationError("picard_tol", "must be positive")
        if self.picard_max < 1:
            raise ValidationError("picard_max", "must be at least 1")
        if not 0.0 < self.damping_theta <= 1.0:
            raise ValidationError("damping_theta", "must lie in (0, 1]")
        if not self.eta_floor > 0.0:
            raise ValidationError("eta_floor", "must be positive")


@dataclass(frozen=True)
class StepResult:
    """Converged state of one implicit step plus solver telemetry."""

    w: np.ndarray
    iterations: int
    final_increment: float
    linear_residual: float
    theta: float
    restarts: int


@dataclass
class SimulationResult:
    """Trajectory handle returned by ``run_simulation``.

    ``records`` is thinned by ``record_every`` but always keeps the initial
    and final states; ``verdicts`` covers every accepted step.  The running
    sums ``w_time_integral`` and ``production_time_integral`` accumulate
    tau * integral(w) and tau * integral(r) over all steps, which together
    predict the exact per-species mass drift.  ``clamp_count`` exists so
    downstream reports can state it: the scheme never projects or clips a
    state, so it stays zero.
    """

    spec: MixtureSpec
    grid: Grid1D
    params: SchemeParams
    records: list[DiagnosticsRecord] = field(default_factory=list)
    verdicts: list[AuditVerdict] = field(default_factory=list)
    c: np.ndarray | None = None
    w: np.ndarray | None = None
    t_final: float = 0.0
    steps: int = 0
    reference: np.ndarray | None = None
    initial_masses: np.ndarray | None = None
    w_time_integral: np.ndarray | None = None
    production_time_integral: np.ndarray | None = None
    clamp_count: int = 0
    tau_retries: int = 0


def regularize_initial(spec: MixtureSpec, c0: np.ndarray, eta: float) -> np.ndarray:
    """Blend admissible initial data toward the uniform mixture.

    Returns (1 - (N+1) eta) c0 + eta, which keeps every fraction, the
    implied one included, at least eta away from zero while moving each
    value by at most (N+1) eta.  Constant fields stay constant.  Data with
    negative fractions or cell sums beyond one (past rounding, 1e-12) is
    rejected rather than repaired.
    """
    n1 = spec.n_species
    if not 0.0 < eta < 1.0 / n1:
        raise ValidationError("eta_floor", f"must lie in (0, 1/{n1})")
    c0 = np.asarray(c0, dtype=float)
    if c0.ndim != 2 or c0.shape[1] != spec.n_reduced:
        raise DimensionMismatch(
            f"initial data must be (cells, {spec.n_reduced}), got {c0.shape}"
        )
    if np.any(c0 < 0.0):
        raise InadmissibleInitialData("negative initial fraction")
    sums = c0.sum(axis=-1)
    if np.any(sums > 1.0 + 1e-12):
        raise InadmissibleInitialData("initial fractions exceed unit sum")
    return (1.0 - n1 * eta) * c0 + eta


class _Workspace:
    """Preallocated buffers reused across assemblies of one run."""

    def __init__(self, spec: MixtureSpec, grid: Grid1D):
        n = spec.n_reduced
        self.ab = np.zeros((2 * n + 1, n * grid.cells))
        self.l2_bands = laplacian_squared_lower_bands(grid)


def _assemble_banded(
    spec: MixtureSpec,
    grid: Grid1D,
    tau: float,
    eps: float,
    w_bar: np.ndarray,
    c_prev: np.ndarray,
    augment: bool,
    work: _Workspace,
) -> tuple[np.ndarray, np.ndarray]:
    """Build the frozen-coefficient system in symmetric lower-banded form.

    Storage follows the LAPACK convention ab[k, q] = S[q + k, q].  Face
    mobilities are averaged from the two neighboring cells and symmetrized
    so the assembled matrix is symmetric to the last bit.
    """
    n = spec.n_reduced
    m = grid.cells
    h = grid.h
    ab = work.ab
    ab[:] = 0.0
    c_bar = w_to_c(w_bar)
    B = mobility_matrix(spec, c_bar)
    Bf = 0.5 * (B[:-1] + B[1:])
    Bf = 0.5 * (Bf + np.swapaxes(Bf, -1, -2))
    dblk = np.zeros((m, n, n))
    dblk[1:] += Bf
    dblk[:-1] += Bf
    dblk /= h
    b = (h / tau) * (c_prev - c_bar)
    b += h * production_rates(spec.production, full_concentrations(c_bar))[:, :n]
    if augment:
        hinv = entropy_hessian_inverse(c_bar) * (h / tau)
        dblk += hinv
        b += np.einsum("mij,mj->mi", hinv, w_bar)
    for i in range(n):
        for j in range(i + 1):
            ab[i - j, j::n] += dblk[:, i, j]
    off = Bf / (-h)
    stop = (m - 1) * n
    for i in range(n):
        for j in range(n):
            ab[n + i - j, j : j + stop : n] += off[:, i, j]
    if eps != 0.0:
        l0, l1, l2 = work.l2_bands
        s = eps * h
        for i in range(n):
            ab[0, i::n] += s * (l0 + 1.0)
            ab[n, i : i + (m - 1) * n : n] += s * l1
            ab[2 * n, i : i + (m - 2) * n : n] += s * l2
    return ab, b.ravel()


def _band_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[0] * x
    size = x.size
    for k in range(1, ab.shape[0]):
        a = ab[k, : size - k]
        y[k:] += a * x[: size - k]
        y[: size - k] += a * x[k:]
    return y


def assemble_linear_system(
    spec: MixtureSpec,
    grid: Grid1D,
    params: SchemeParams,
    w_bar: np.ndarray,
    c_prev: np.ndarray,
    tau: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Dense frozen-coefficient system of one fixed-point iteration.

    This is the plain linearization: mobility, production and the previous
    state all frozen at ``w_bar``, nothing added.  Its solution set is the
    same as the augmented system the solver actually iterates, since the
    extra term vanishes at any fixed point.  The matrix is symmetric, and
    positive definite whenever eps is positive.
    """
    tau = params.tau if tau is None else tau
    w_bar = np.asarray(w_bar, dtype=float)
    work = _Workspace(spec, grid)
    ab, b = _assemble_banded(
        spec, grid, tau, params.eps, w_bar, np.asarray(c_prev, dtype=float),
        augment=False, work=work,
    )
    size = b.size
    S = np.zeros((size, size))
    for k in range(ab.shape[0]):
        vals = ab[k, : size - k]
        idx = np.arange(size - k)
        S[idx + k, idx] = vals
        S[idx, idx + k] = vals
    return S, b


def picard_step(
    spec: MixtureSpec,
    grid: Grid1D,
    params: SchemeParams,
    w_bar: np.ndarray,
    c_prev: np.ndarray,
    tau: float | None = None,
    theta: float | None = None,
    augmented: bool = True,
    work: _Workspace | None = None,
) -> tuple[np.ndarray, float]:
    """One damped fixed-point update of the implicit step.

    Solves the (by default augmented) frozen system by banded Cholesky and
    returns the under-relaxed iterate together with the backward-error
    residual of the solve, ||S x - b|| / (||S||_F ||x|| + ||b||).  A
    residual above 1e-12, a failed factorization, or a non-finite solution
    raises ``LinearSolveFailure``.
    """
    tau = params.tau if tau is None else tau
    theta = params.damping_theta if theta is None else theta
    if work is None:
        work = _Workspace(spec, grid)
    w_bar = np.asarray(w_bar, dtype=float)
    ab, b = _assemble_banded(
        spec, grid, tau, params.eps, w_bar, c_prev, augment=augmented, work=work
    )
    try:
        x = solveh_banded(ab, b, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(f"banded Cholesky failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("linear solver produced non-finite values")
    norm_S = np.sqrt(float(np.sum(ab[0] ** 2)) + 2.0 * float(np.sum(ab[1:] ** 2)))
    denom = norm_S * float(np.linalg.norm(x)) + float(np.linalg.norm(b))
    resid = float(np.linalg.norm(_band_matvec(ab, x) - b)) / max(denom, 1e-300)
    if resid > 1e-12:
        raise LinearSolveFailure(f"linear solve residual {resid:.3e} exceeds 1e-12")
    w_new = (1.0 - theta) * w_bar + theta * x.reshape(w_bar.shape)
    return w_new, resid


def advance_step(
    spec: MixtureSpec,
    grid: Grid1D,
    params: SchemeParams,
    w_prev: np.ndarray,
    tau: float | None = None,
    work: _Workspace | None = None,
) -> StepResult:
    """Advance the state by one implicit step.

    Damped fixed-point iterations start from the previous state.  Each
    update direction comes from the augmented frozen system; the effective
    relaxation is chosen by backtracking until the nonlinear residual
    decreases, which keeps the iteration globally convergent even for
    near-vacuum states whose entropy variables jump by tens between
    neighboring cells.  The step is accepted once the max-norm increment
    drops below ``picard_tol`` (pushed further to rounding level when
    polishing) or the residual reaches its floor: rough states leave the
    system too ill-conditioned in the vanished species' directions for the
    increment ever to reach the tolerance, while the residual floor
    certifies a fixed point to working precision.

    Increments growing three times in a row while the backtracking is
    already cutting steps triggers a restart with the base relaxation
    halved, as does a failed backtracking search; after three restarts or
    once the iteration budget is spent the step raises
    ``NonlinearDivergence``.
    """
    tau = params.tau if tau is None else tau
    if work is None:
        work = _Workspace(spec, grid)
    w_prev = np.asarray(w_prev, dtype=float)
    c_prev = w_to_c(w_prev)
    theta = params.damping_theta
    restarts = 0
    iterations = 0
    all_increments: list[float] = []
    lin_resid = 0.0

    def assemble_at(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
        """Assemble at w; return system, rhs, its norm and the residual there."""
        ab, b = _assemble_banded(
            spec, grid, tau, params.eps, w, c_prev, augment=True, work=work
        )
        norm_S = np.sqrt(
            float(np.sum(ab[0] ** 2)) + 2.0 * float(np.sum(ab[1:] ** 2))
        )
        res = float(np.linalg.norm(_band_matvec(ab, w.ravel()) - b))
        return ab, b, norm_S, res

    while True:
        w_acc = w_prev
        ab, b, norm_S, f_acc = assemble_at(w_acc)
        increments: list[float] = []
        last_s = 1.0
        polishing = False
        polish_left = 8
        diverged = False
        while iterations < params.picard_max:
            try:
                x = solveh_banded(ab, b, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise LinearSolveFailure(f"banded Cholesky failed: {exc}") from exc
            if not np.all(np.isfinite(x)):
                raise LinearSolveFailure("linear solver produced non-finite values")
            denom = max(norm_S * float(np.linalg.norm(x)) + float(np.linalg.norm(b)), 1e-300)
            lin_resid = float(np.linalg.norm(_band_matvec(ab, x) - b)) / denom
            if lin_resid > 1e-12:
                raise LinearSolveFailure(
                    f"linear solve residual {lin_resid:.3e} exceeds 1e-12"
                )
            d = x.reshape(w_acc.shape) - w_acc
            s = 1.0
            accepted = False
            for _ in range(11):
                w_try = w_acc + (theta * s) * d
                ab, b, norm_S, f_try = assemble_at(w_try)
                floor = 1e-14 * (
                    norm_S * float(np.linalg.norm(w_try)) + float(np.linalg.norm(b))
                )
                if f_try <= (1.0 - 1e-4 * theta * s) * f_acc or f_try <= floor:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                diverged = True
                break
            iterations += 1
            inc = float(np.max(np.abs(w_try - w_acc)))
            prev_inc = increments[-1] if increments else np.inf
            increments.append(inc)
            all_increments.append(inc)
            w_acc = w_try
            f_acc = f_try
            at_floor = f_acc <= floor
            if inc <= params.picard_tol or at_floor:
                done = (
                    at_floor
                    or not params.final_polish
                    or inc <= POLISH_INCREMENT
                )
                if polishing:
                    polish_left -= 1
                    # rounding plateau: increments stop shrinking
                    done = done or polish_left <= 0 or (
                        inc >= prev_inc and inc < 1e-11
                    )
                if done:
                    return StepResult(
                        w=w_acc,
                        iterations=iterations,
                        final_increment=inc,
                        linear_residual=lin_resid,
                        theta=theta,
                        restarts=restarts,
                    )
                polishing = True
                continue
            if (
                len(increments) >= 3
                and increments[-1] > increments[-2] > increments[-3]
                and (s < 1.0 or last_s < 1.0)
            ):
                diverged = True
                break
            last_s = s
        if not diverged:
            raise NonlinearDivergence(
                f"no convergence within {params.picard_max} iterations",
                increments=all_increments,
            )
        restarts += 1
        if restarts > 3 or iterations >= params.picard_max:
            raise NonlinearDivergence(
                f"diverging increments after {restarts - 1} restarts",
                increments=all_increments,
            )
        theta *= 0.5


def _make_record(
    spec: MixtureSpec,
    grid: Grid1D,
    t: float,
    c: np.ndarray,
    w: np.ndarray,
    reference: np.ndarray,
    iterations: int,
) -> DiagnosticsRecord:
    raw, sqrt_form = dissipation(spec, grid, c, w, enforce=False)
    cf = full_concentrations(c)
    return DiagnosticsRecord(
        time=t,
        entropy=entropy_functional(grid, c),
        relative_entropy=relative_entropy(grid, c, reference),
        dissipation_sqrt=sqrt_form,
        dissipation_raw=raw,
        masses=integrate(grid, cf),
        min_c=float(np.min(cf)),
        picard_iterations=iterations,
    )


def run_simulation(
    spec: MixtureSpec,
    grid: Grid1D,
    params: SchemeParams,
    c0: np.ndarray,
    audit_mode: str = "enforce",
    hooks: Sequence[StepHook] | None = None,
    record_every: int = 1,
) -> SimulationResult:
    """Run the scheme from regularized initial data to the final time.

    Every accepted step is audited against the proved invariants (entropy
    decrease with dissipation accounted, exact mass balance, strict
    positivity, dissipation lower bound).  ``audit_mode`` is "enforce"
    (violations abort with ``AuditFailure`` carrying the partial result),
    "warn", or "off".  A step whose nonlinear solve diverges is retried
    with the step size halved, up to five times, before the run aborts
    with ``SimulationAborted``; subsequent steps return to the nominal
    step size.

    ``hooks`` are called after every accepted step as
    ``hook(step_index, t, c, w, record)``.  ``record_every`` thins the
    stored records (the initial and final states are always kept).
    """
    if audit_mode not in ("enforce", "warn", "off"):
        raise ValidationError("audit_mode", "must be 'enforce', 'warn' or 'off'")
    if record_every < 1:
        raise ValidationError("record_every", "must be a positive integer")
    if not params.eps > 0.0:
        raise ValidationError("eps", "the implicit solver needs eps > 0")
    c = regularize_initial(spec, c0, params.eta_floor)
    w = c_to_w(c)
    masses0 = integrate(grid, full_concentrations(c))
    reference = masses0 / masses0.sum()
    work = _Workspace(spec, grid)
    laplacian = neumann_laplacian(grid)
    slack = solver_slack(params.picard_tol, spec.n_reduced, grid.cells)
    result = SimulationResult(
        spec=spec,
        grid=grid,
        params=params,
        reference=reference,
        initial_masses=masses0,
        w_time_integral=np.zeros(spec.n_reduced),
        production_time_integral=np.zeros(spec.n_reduced),
    )
    record = _make_record(spec, grid, 0.0, c, w, reference, 0)
    result.records.append(record)
    result.c, result.w = c, w

    # audits need the previous record, hooks receive the current one; with
    # both absent the record is only built at the steps actually stored
    build_every = audit_mode != "off" or bool(hooks)
    t = 0.0
    k = 0
    last_stored = 0
    last_iterations = 0
    while True:
        remaining = params.t_end - t
        if remaining <= 1e-9 * params.tau:
            break
        tau_k = min(params.tau, remaining)
        step = None
        for attempt in range(6):
            try:
                step = advance_step(spec, grid, params, w, tau=tau_k, work=work)
                break
            except NonlinearDivergence:
                result.tau_retries += 1
                tau_k *= 0.5
                if attempt == 5:
                    raise SimulationAborted(
                        f"step {k + 1} failed after halving the step size "
                        "five times", partial=result,
                    )
        if step is None:
            raise SimulationAborted(f"step {k + 1} failed", partial=result)
        k += 1
        t += tau_k
        w_new = step.w
        c_new = w_to_c(w_new)
        last_iterations = step.iterations
        store = k % record_every == 0
        if build_every or store:
            new_record = _make_record(
                spec, grid, t, c_new, w_new, reference, step.iterations
            )
        else:
            new_record = None
        r_full = production_rates(spec.production, full_concentrations(c_new))
        r_int = integrate(grid, r_full[:, : spec.n_reduced])
        w_int = integrate(grid, w_new)
        result.w_time_integral += tau_k * w_int
        result.production_time_integral += tau_k * r_int
        if audit_mode != "off":
            verdict = audit_step(
                spec, grid, tau_k, params.eps, slack,
                record, new_record, c_new, w_new,
                production_integral=r_int,
                laplacian=laplacian,
            )
            result.verdicts.append(verdict)
            if not verdict.passed:
                failed = [
                    name
                    for name, ok in (
                        ("entropy", verdict.entropy_ok),
                        ("mass", verdict.mass_ok),
                        ("bounds", verdict.bounds_ok),
                        ("dissipation", verdict.dissipation_ok),
                    )
                    if not ok
                ]
                msg = f"step {k} violated: {', '.join(failed)}"
                if audit_mode == "enforce":
                    result.c, result.w = c_new, w_new
                    result.t_final, result.steps = t, k
                    result.records.append(new_record)
                    raise AuditFailure(msg, partial=result)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
        c, w, record = c_new, w_new, new_record
        result.c, result.w = c, w
        result.t_final, result.steps = t, k
        if hooks:
            for hook in hooks:
                hook(k, t, c, w, record)
        if store:
            result.records.append(record)
            last_stored = k
    if result.steps and last_stored != result.steps:
        if record is None:
            record = _make_record(spec, grid, t, c, w, reference, last_iterations)
        result.records.append(record)
    return result
