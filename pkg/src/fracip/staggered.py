"""Alternate minimization: balance / plastic / damage sub-solves per step.

The outer loop fixes two fields and solves for the third:

1. balance equation by undamped Newton;
2. plastic evolution by the interior-point method restricted to
   (kappa, lam_kappa) -- the sub-problem residual is linear in kappa, so
   the Jacobian is assembled once per sub-solve;
3. damage evolution by the interior-point method restricted to
   (alpha, lam_d, lam_at), or by one of the two benchmark treatments:
   a history field (single linear solve with bound clamping) or an
   augmented Lagrangian (semismooth Newton plus multiplier sweeps).

Convergence is declared when the balance and plastic residuals, recomputed
after the damage update, both fall under the tolerance; the damage residual
is guaranteed by its sub-solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from fracip import linalg
from fracip.assembly import (
    Discretization,
    SystemState,
    al_penalty,
    assemble_system,
    history_damage_system,
    update_history,
)
from fracip.errors import MaxIterationsExceeded, SingularToWorkingPrecision, ZeroGap
from fracip.ip_core import (
    IpParams,
    IterationRow,
    SolveStats,
    barrier_parameter,
    duality_measure,
    recover_dual,
    step_length_dual,
    step_length_primal,
)
from fracip.material import MaterialParams

__all__ = [
    "StaggeredParams",
    "OuterIterationRecord",
    "solve_balance",
    "solve_plastic_ip",
    "solve_damage_ip",
    "solve_damage_hf",
    "solve_damage_al",
    "alternate_minimize",
]


@dataclass(frozen=True)
class StaggeredParams:
    """Outer-loop controls plus the sub-solver interior-point parameters."""

    tol: float = 1e-5
    max_outer: int = 500
    ip: IpParams = field(default_factory=IpParams)
    damage_scheme: str = "interior_point"
    al_gamma: float = 2.6e6
    al_max_sweeps: int = 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.damage_scheme not in ("interior_point", "history_field", "augmented_lagrangian"):
            raise ValueError(f"unknown damage scheme {self.damage_scheme!r}")
        if self.damage_scheme == "augmented_lagrangian" and self.al_gamma <= 0:
            raise ValueError("al_gamma must be positive")


@dataclass
class OuterIterationRecord:
    """One staggered iteration: residuals after the damage update, energy,
    and sub-iteration counts."""

    iteration: int
    res_u: float
    res_kappa: float
    res_alpha: float
    energy: float
    n_balance: int
    n_plastic: int
    n_damage: int
    mu_damage: float


def _free_balance_dofs(asm, disc):
    """Free dofs minus rows with exactly zero stiffness (fully degraded)."""
    diag = asm.kuu.diagonal()
    free = disc.free_dofs
    return free[diag[free] != 0.0]


def solve_balance(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    tol: float,
    *,
    with_plasticity: bool,
    max_iter: int = 50,
    stats: SolveStats | None = None,
    phase: str = "balance",
) -> int:
    """Undamped Newton on the balance equation; internal variables frozen."""
    for k in range(1, max_iter + 1):
        asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
        res = float(np.abs(asm.r_u[disc.free_dofs]).max()) if disc.free_dofs.size else 0.0
        if res <= tol:
            return k - 1
        free = _free_balance_dofs(asm, disc)
        fac = linalg.factor(linalg.SparseSymmetric.from_scipy(asm.kuu[free][:, free]))
        du = fac.solve(-asm.r_u[free])
        state.u[free] += du
        if stats is not None:
            stats.iterations.append(
                IterationRow(phase, k, res, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1, asm.energy)
            )
    raise MaxIterationsExceeded(
        f"balance Newton did not converge in {max_iter} iterations",
        diagnostics={"res_u": res},
    )


def _solve_bound_ip(
    kmat,
    r_ref,
    x_ref,
    m_diag,
    x,
    lam_lo,
    lam_up,
    lower,
    upper,
    act,
    ip: IpParams,
    tol: float,
    stats: SolveStats,
    phase: str,
) -> float:
    """Interior-point solve of a linear residual with nodal bound constraints.

    ``r(x) = r_ref + K (x - x_ref)`` excludes dual terms; the dual coupling
    is ``-diag(m) lam_lo`` and, when an upper bound exists,
    ``+diag(m) lam_up``.  Operates in place on ``x`` and the duals over the
    rows in ``act``.  Returns the final barrier value.
    """
    has_upper = upper is not None
    kact = kmat[act][:, act]
    mact = m_diag[act]

    def residual_nodual():
        return (r_ref + kmat @ (x - x_ref))[act]

    def gaps():
        s_lo = (x - lower)[act]
        s_up = (upper - x)[act] if has_upper else None
        return s_lo, s_up

    # Gertz dual initialization from the affine direction at lam = 1
    lam_lo[act] = 1.0
    if has_upper:
        lam_up[act] = 1.0
    s_lo, s_up = gaps()
    if np.any(s_lo <= 0.0) or (has_upper and np.any(s_up <= 0.0)):
        raise ZeroGap("sub-solver starting point is not strictly feasible")
    diag = mact * (lam_lo[act] / s_lo + (lam_up[act] / s_up if has_upper else 0.0))
    fac = linalg.factor(linalg.SparseSymmetric.from_scipy(kact + sp.diags(diag)))
    r0 = residual_nodual()
    d = fac.solve(-r0)
    dl = recover_dual(lam_lo[act], s_lo, d, 0.0)
    lam_lo[act] = np.maximum(1.0, np.abs(1.0 + dl))
    if has_upper:
        dl = recover_dual(lam_up[act], s_up, -d, 0.0)
        lam_up[act] = np.maximum(1.0, np.abs(1.0 + dl))
    nfact_carry = 1

    mu_last = np.inf
    for k in range(1, ip.max_iter + 1):
        r0 = residual_nodual()
        r_full = r0 - mact * lam_lo[act] + (mact * lam_up[act] if has_upper else 0.0)
        s_lo, s_up = gaps()
        comp = np.abs(lam_lo[act] * s_lo).max(initial=0.0)
        if has_upper:
            comp = max(comp, np.abs(lam_up[act] * s_up).max(initial=0.0))
        res = max(np.abs(r_full).max(initial=0.0), comp)
        if res <= tol and mu_last <= tol:
            return mu_last if np.isfinite(mu_last) else 0.0

        if np.any(s_lo <= 0.0) or (has_upper and np.any(s_up <= 0.0)):
            raise ZeroGap("constraint gap underflowed in sub-solver")
        pairs = [(s_lo, lam_lo[act])] + ([(s_up, lam_up[act])] if has_upper else [])
        m_cur = duality_measure(pairs)

        diag = mact * (lam_lo[act] / s_lo + (lam_up[act] / s_up if has_upper else 0.0))
        fac = linalg.factor(linalg.SparseSymmetric.from_scipy(kact + sp.diags(diag)))
        nfact = nfact_carry + 1
        nfact_carry = 0

        d_aff = fac.solve(-r0)
        dl_lo_a = recover_dual(lam_lo[act], s_lo, d_aff, 0.0)
        dgaps = [d_aff]
        dlams = [dl_lo_a]
        if has_upper:
            dl_up_a = recover_dual(lam_up[act], s_up, -d_aff, 0.0)
            dgaps.append(-d_aff)
            dlams.append(dl_up_a)
        gap_cat = np.concatenate([s_lo] + ([s_up] if has_upper else []))
        lam_cat = np.concatenate([lam_lo[act]] + ([lam_up[act]] if has_upper else []))
        tp_a = step_length_primal(gap_cat, np.concatenate(dgaps), ip.tau)
        td_a = step_length_dual(lam_cat, np.concatenate(dlams), ip.tau)
        m_aff = duality_measure(
            [(gap_cat + tp_a * np.concatenate(dgaps), lam_cat + td_a * np.concatenate(dlams))]
        )
        sigma, mu = barrier_parameter(
            m_aff, m_cur, None if not np.isfinite(mu_last) else mu_last,
            exponent=ip.sigma_exponent, growth_cap=ip.mu_growth_cap,
        )

        corr = mu * mact / s_lo - (mu * mact / s_up if has_upper else 0.0)
        d = fac.solve(-(r0 - corr))
        dl_lo = recover_dual(lam_lo[act], s_lo, d, mu)
        dgaps = [d]
        dlams = [dl_lo]
        if has_upper:
            dl_up = recover_dual(lam_up[act], s_up, -d, mu)
            dgaps.append(-d)
            dlams.append(dl_up)
        t_prim = step_length_primal(gap_cat, np.concatenate(dgaps), ip.tau)
        t_dual = step_length_dual(lam_cat, np.concatenate(dlams), ip.tau)

        x[act] += t_prim * d
        lam_lo[act] += t_dual * dl_lo
        if has_upper:
            lam_up[act] += t_dual * dl_up
        mu_last = mu
        stats.iterations.append(
            IterationRow(
                phase, k,
                0.0,
                res if phase == "plastic" else 0.0,
                res if phase != "plastic" else 0.0,
                mu, sigma, 0.0, t_prim, t_dual, nfact, np.nan,
            )
        )
    raise MaxIterationsExceeded(
        f"{phase} interior-point solve did not converge in {ip.max_iter} iterations",
        diagnostics={"res": res, "mu": mu_last},
    )


def solve_plastic_ip(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    ip: IpParams,
    tol: float,
    stats: SolveStats,
) -> float:
    """Interior-point solve of the plastic evolution problem at fixed u, alpha."""
    asm = assemble_system(disc, state, params, with_plasticity=True)
    act = np.arange(disc.n_nodes)
    return _solve_bound_ip(
        asm.kkk,
        asm.r_kappa0,
        state.kappa.copy(),
        asm.coupling_diag,
        state.kappa,
        state.lam_kappa,
        None,
        state.kappa_n,
        None,
        act,
        ip,
        tol,
        stats,
        "plastic",
    )


def solve_damage_ip(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    ip: IpParams,
    tol: float,
    mask: np.ndarray,
    stats: SolveStats,
    *,
    with_plasticity: bool,
) -> float:
    """Interior-point solve of the damage evolution problem at fixed u, kappa."""
    asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
    act = np.nonzero(~mask)[0]
    return _solve_bound_ip(
        asm.kaa,
        asm.r_alpha0,
        state.alpha.copy(),
        asm.coupling_diag,
        state.alpha,
        state.lam_d,
        state.lam_at,
        state.alpha_n,
        np.ones(disc.n_nodes),
        act,
        ip,
        tol,
        stats,
        "damage",
    )


def solve_damage_hf(
    disc: Discretization,
    state: SystemState,
    history: np.ndarray,
    params: MaterialParams,
    tol: float,
    stats: SolveStats,
    max_sweeps: int = 30,
) -> int:
    """History-field damage update: linear solve with [alpha_n, 1] clamping.

    The residual is linear in alpha for both models; bounds are enforced by
    a primal active-set loop (for AT-2 the unconstrained solution is
    normally already feasible, giving the advertised single linear solve).
    """
    a_mat, b = history_damage_system(disc, history, params)
    nn = disc.n_nodes
    lower = state.alpha_n
    at_lo = np.zeros(nn, dtype=bool)
    at_hi = np.zeros(nn, dtype=bool)
    alpha = np.clip(state.alpha, lower, 1.0)
    n_solves = 0
    for sweep in range(1, max_sweeps + 1):
        fixed = at_lo | at_hi
        alpha = np.where(at_lo, lower, np.where(at_hi, 1.0, alpha))
        free = np.nonzero(~fixed)[0]
        if free.size:
            rhs = b[free] - (a_mat[free] @ alpha) + (a_mat[free][:, free] @ alpha[free])
            try:
                fac = linalg.factor(linalg.SparseSymmetric.from_scipy(a_mat[free][:, free]))
                alpha[free] = fac.solve(rhs)
                n_solves += 1
            except SingularToWorkingPrecision:
                # driving energy identically zero: clamp everything down
                alpha[free] = lower[free]
                at_lo[free] = True
        viol_lo = alpha < lower - 1e-14
        viol_hi = alpha > 1.0 + 1e-14
        r = a_mat @ alpha - b
        release_lo = at_lo & (r < -tol)
        release_hi = at_hi & (r > tol)
        if not (viol_lo.any() or viol_hi.any() or release_lo.any() or release_hi.any()):
            break
        at_lo = (at_lo | viol_lo) & ~release_lo
        at_hi = (at_hi | viol_hi) & ~release_hi
        alpha = np.clip(alpha, lower, 1.0)
    state.alpha = np.clip(alpha, lower, 1.0)
    state.lam_d[:] = 0.0
    state.lam_at[:] = 0.0
    stats.iterations.append(
        IterationRow("damage_hf", n_solves, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, n_solves, np.nan)
    )
    return max(n_solves, 1)


def solve_damage_al(
    disc: Discretization,
    state: SystemState,
    xi: np.ndarray,
    gamma: float,
    params: MaterialParams,
    tol: float,
    stats: SolveStats,
    *,
    with_plasticity: bool,
    max_sweeps: int = 50,
    max_newton: int = 50,
) -> int:
    """Augmented-Lagrangian damage update with Moreau-Yosida penalty.

    Semismooth Newton on the penalized residual, then a multiplier sweep
    ``xi <- pen(alpha)``; sweeps stop when the active penalty sets are
    unchanged.  ``xi`` is updated in place.
    """
    asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
    kaa, r_ref, x_ref = asm.kaa, asm.r_alpha0, state.alpha.copy()
    m = disc.coupling_diag
    alpha = state.alpha
    n_iter = 0
    prev_active = None
    for sweep in range(1, max_sweeps + 1):
        for _ in range(max_newton):
            pen, active = al_penalty(alpha, state.alpha_n, xi, gamma)
            r = r_ref + kaa @ (alpha - x_ref) + m * pen
            res = float(np.abs(r).max())
            n_iter += 1
            stats.iterations.append(
                IterationRow("damage_al", n_iter, 0.0, 0.0, res, 0.0, 0.0, 0.0, 1.0, 1.0, 1, np.nan)
            )
            if res <= tol:
                break
            jac = kaa + sp.diags(m * gamma * active)
            fac = linalg.factor(linalg.SparseSymmetric.from_scipy(jac))
            alpha += fac.solve(-r)
        else:
            raise MaxIterationsExceeded("AL damage Newton stalled", {"res": res})
        pen, active = al_penalty(alpha, state.alpha_n, xi, gamma)
        xi[:] = pen
        if prev_active is not None and np.array_equal(active, prev_active):
            break
        prev_active = active.copy()
    state.lam_d[:] = 0.0
    state.lam_at[:] = 0.0
    return n_iter


def alternate_minimize(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    sp_params: StaggeredParams,
    *,
    with_plasticity: bool,
    history: np.ndarray | None = None,
):
    """Alternate minimization of one quasi-static step.

    ``state`` enters as the previous step with the new imposed boundary
    values in ``state.u`` and is updated in place.  Returns
    ``(records, stats, history)`` where ``history`` is the updated history
    field (history-field scheme only).
    """
    ip = sp_params.ip
    tol = sp_params.tol
    inc = 1.0 - ip.crtol
    scheme = sp_params.damage_scheme
    stats = SolveStats()
    records: list[OuterIterationRecord] = []

    if scheme == "interior_point":
        mask = state.alpha_n > ip.crtol
        state.alpha = np.where(mask, 1.0, state.alpha_n.copy())
        state.lam_d[mask] = 0.0
        state.lam_at[mask] = 0.0
    else:
        mask = np.zeros(disc.n_nodes, dtype=bool)
    xi = np.zeros(disc.n_nodes)
    h_step = history

    for i in range(1, sp_params.max_outer + 1):
        n_bal = solve_balance(
            disc, state, params, tol, with_plasticity=with_plasticity, stats=stats
        )

        n_pl = 0
        if with_plasticity:
            state.kappa = np.maximum(state.kappa, state.kappa_n) + inc
            before = stats.n_iterations
            solve_plastic_ip(disc, state, params, ip, tol, stats)
            n_pl = stats.n_iterations - before

        mu_dmg = 0.0
        if scheme == "interior_point":
            base = (
                state.alpha_n
                if params.model == "AT1"
                else np.maximum(state.alpha, state.alpha_n)
            )
            start = np.minimum(base + inc, 0.5 * (base + 1.0))
            state.alpha = np.where(mask, 1.0, start)
            before = stats.n_iterations
            mu_dmg = solve_damage_ip(
                disc, state, params, ip, tol, mask, stats, with_plasticity=with_plasticity
            )
            n_dmg = stats.n_iterations - before
        elif scheme == "history_field":
            h_iter = update_history(h_step, disc, state, params, with_plasticity=with_plasticity)
            n_dmg = solve_damage_hf(disc, state, h_iter, params, tol, stats)
        else:
            before = stats.n_iterations
            solve_damage_al(
                disc,
                state,
                xi,
                sp_params.al_gamma,
                params,
                tol,
                stats,
                with_plasticity=with_plasticity,
                max_sweeps=sp_params.al_max_sweeps,
            )
            n_dmg = stats.n_iterations - before

        asm = assemble_system(
            disc, state, params, with_plasticity=with_plasticity, need_jacobian=False
        )
        res_u = float(np.abs(asm.r_u[disc.free_dofs]).max())
        if with_plasticity:
            comp_k = float(np.abs(state.lam_kappa * (state.kappa - state.kappa_n)).max())
            res_k = max(float(np.abs(asm.r_kappa).max()), comp_k)
        else:
            res_k = 0.0
        unm = ~mask
        res_a = float(np.abs(asm.r_alpha[unm]).max()) if unm.any() else 0.0
        records.append(
            OuterIterationRecord(
                i, res_u, res_k, res_a, asm.energy, n_bal, n_pl, n_dmg, mu_dmg
            )
        )
        if res_u <= tol and res_k <= tol:
            break
    else:
        raise MaxIterationsExceeded(
            f"alternate minimization did not converge in {sp_params.max_outer} iterations",
            diagnostics={"res_u": res_u, "res_kappa": res_k},
        )

    if scheme == "history_field":
        h_step = update_history(h_step, disc, state, params, with_plasticity=with_plasticity)
    return records, stats, h_step
