"""Primal-dual interior-point machinery.

One damped Newton step is taken per barrier value.  Each iteration:

1. assemble residuals and Jacobians, check convergence (residual norms of
   the unperturbed optimality system plus a barrier-size check);
2. determine the inertia correction delta on the equilibrium-damage
   Hessian (plastic variables fixed) by repeated factorization;
3. factor the condensed primal system once and solve two right-hand
   sides: the affine predictor (mu = 0) and, after the adaptive centering
   step, the corrector;
4. recover the dual steps from the diagonal gap/dual matrices and damp
   both steps with the fraction-to-the-boundary rule.

Constraint handling: nodes whose previous-step damage exceeds ``crtol``
are fixed at alpha = 1 for the whole step and their two damage
constraints leave the system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from fracip import linalg
from fracip.assembly import (
    AssembledSystem,
    Discretization,
    SystemState,
    assemble_kkt,
    assemble_system,
)
from fracip.errors import (
    DegenerateMeasure,
    MaxIterationsExceeded,
    SingularToWorkingPrecision,
    StabilizationOverflow,
    ZeroGap,
)
from fracip.material import MaterialParams

__all__ = [
    "IpParams",
    "IterationRow",
    "SolveStats",
    "step_length_primal",
    "step_length_dual",
    "duality_measure",
    "centering_parameter",
    "barrier_parameter",
    "recover_dual",
    "stabilization_factor",
    "starting_values",
    "monolithic_solve",
    "condense_monolithic",
]


@dataclass(frozen=True)
class IpParams:
    """Interior-point controls.

    ``tau`` is the fraction-to-the-boundary constant, ``crtol`` the
    crack-fixing threshold (both 0.999 by default), ``tol`` the residual
    tolerance.  ``delta_seed`` seeds the inertia correction and
    ``sigma_exponent`` is the centering exponent.
    """

    tol: float = 1e-5
    max_iter: int = 300
    tau: float = 0.999
    crtol: float = 0.999
    delta_seed: float = 1e-4
    delta_max: float = 1e40
    sigma_exponent: float = 3.0
    mu_growth_cap: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if not 0.0 < self.crtol < 1.0:
            raise ValueError("crtol must be in (0, 1)")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass
class IterationRow:
    """One solver iteration for the stats stream."""

    phase: str
    iteration: int
    res_u: float
    res_kappa: float
    res_alpha: float
    mu: float
    sigma: float
    delta: float
    t_prim: float
    t_dual: float
    n_factorizations: int
    energy: float


@dataclass
class SolveStats:
    iterations: list[IterationRow] = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def n_factorizations(self) -> int:
        return sum(r.n_factorizations for r in self.iterations)

    @property
    def max_delta(self) -> float:
        return max((r.delta for r in self.iterations), default=0.0)

    @property
    def final_mu(self) -> float:
        return self.iterations[-1].mu if self.iterations else 0.0


def step_length(values, deltas, tau: float) -> float:
    """Largest t in (0, 1] with values + t*deltas >= (1 - tau)*values."""
    values = np.asarray(values, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    neg = deltas < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * values[neg] / deltas[neg])))


def step_length_primal(gaps, deltas, tau: float) -> float:
    """Fraction-to-the-boundary step for the constraint gaps."""
    return step_length(gaps, deltas, tau)


def step_length_dual(lams, deltas, tau: float) -> float:
    """Fraction-to-the-boundary step for the dual multipliers."""
    return step_length(lams, deltas, tau)


def duality_measure(pairs) -> float:
    """Average complementarity product over all constraint rows.

    ``pairs`` is a sequence of (gap, lambda) vector pairs, one per
    constraint family, already restricted to unmasked rows.
    """
    total = 0.0
    count = 0
    for gap, lam in pairs:
        total += float(np.dot(gap, lam))
        count += len(gap)
    if count == 0:
        return 0.0
    return total / count


def centering_parameter(measure_affine: float, measure_current: float, exponent: float = 3.0) -> float:
    """Adaptive centering: cubed ratio of affine to current measure, in [0, 1]."""
    if measure_current <= 0.0:
        raise DegenerateMeasure("duality measure is zero")
    return float(np.clip((measure_affine / measure_current) ** exponent, 0.0, 1.0))


def barrier_parameter(
    measure_affine: float,
    measure_current: float,
    mu_prev: float | None,
    exponent: float = 3.0,
    growth_cap: float = 10.0,
):
    """Next barrier value sigma * measure.

    The raw cubed ratio may exceed one when the affine step makes no
    progress; growth is then allowed but capped so that
    mu <= growth_cap * mu_prev.
    """
    if measure_current <= 0.0:
        return 0.0, 0.0
    ratio = (measure_affine / measure_current) ** exponent
    if ratio > 1.0:
        if mu_prev is None:
            mu_prev = measure_current
        ratio = min(ratio, max(1.0, growth_cap * mu_prev / measure_current))
    sigma = max(ratio, 0.0)
    return sigma, sigma * measure_current


def recover_dual(lam, gap, delta_gap, mu: float):
    """Dual step from the condensed primal step: -lam - (lam*dgap - mu)/gap."""
    return -lam - (lam * delta_gap - mu) / gap


def stabilization_factor(
    hessian: linalg.SparseSymmetric,
    delta_prev: float,
    *,
    seed: float = 1e-4,
    delta_max: float = 1e40,
    method: str = "auto",
):
    """Inertia correction: smallest tried delta making ``hessian + delta I``
    positive definite.

    Returns ``(delta, n_factorizations)``.  Factorization breakdown counts
    as "not positive definite".
    """
    n = hessian.dimension
    nfact = 0

    def positive_definite(delta: float) -> bool:
        nonlocal nfact
        nfact += 1
        mat = hessian if delta == 0.0 else hessian.shifted(delta)
        try:
            f = linalg.factor(mat, method=method)
        except SingularToWorkingPrecision:
            return False
        iner = f.inertia()
        return iner.astuple() == (n, 0, 0)

    if positive_definite(0.0):
        return 0.0, nfact
    delta = seed if delta_prev == 0.0 else delta_prev / 2.0
    while not positive_definite(delta):
        delta *= 10.0
        if delta > delta_max:
            raise StabilizationOverflow(f"inertia correction exceeded {delta_max}")
    return delta, nfact


class _Layout:
    """Index bookkeeping of the condensed monolithic unknown vector
    [u_free; kappa; alpha_unmasked]."""

    def __init__(self, disc: Discretization, mask, with_plasticity: bool, pinned_u=None):
        free = disc.free_dofs
        if pinned_u is not None and pinned_u.size:
            free = np.setdiff1d(free, pinned_u, assume_unique=True)
        self.iu = free
        self.ik = np.arange(disc.n_nodes) if with_plasticity else np.empty(0, dtype=np.int64)
        self.ia = np.nonzero(~mask)[0]
        self.nu, self.nk, self.na = len(self.iu), len(self.ik), len(self.ia)
        self.n = self.nu + self.nk + self.na

    def split(self, d):
        du = d[: self.nu]
        dk = d[self.nu : self.nu + self.nk]
        da = d[self.nu + self.nk :]
        return du, dk, da


def _gaps(state: SystemState, layout: _Layout):
    s_k = (state.kappa - state.kappa_n)[layout.ik]
    s_d = (state.alpha - state.alpha_n)[layout.ia]
    s_at = (1.0 - state.alpha)[layout.ia]
    return s_k, s_d, s_at


def condense_monolithic(
    asm: AssembledSystem,
    state: SystemState,
    layout: _Layout,
    mu: float,
    delta: float,
):
    """Condensed primal matrix (Eq.-(19) structure plus the delta shifts)
    and the barrier-modified right-hand side for a given mu."""
    iu, ik, ia = layout.iu, layout.ik, layout.ia
    m = asm.coupling_diag
    s_k, s_d, s_at = _gaps(state, layout)
    if (layout.nk and np.any(s_k <= 0.0)) or np.any(s_d <= 0.0) or np.any(s_at <= 0.0):
        raise ZeroGap("constraint gap underflowed")

    nn = len(m)
    kuu = asm.kuu[iu][:, iu]
    if delta:
        kuu = kuu + delta * sp.identity(layout.nu, format="csr")
    barrier_a = np.zeros(nn)
    barrier_a[ia] = m[ia] * (state.lam_d[ia] / s_d + state.lam_at[ia] / s_at)
    kaa = (asm.kaa + sp.diags(barrier_a))[ia][:, ia]
    if delta:
        kaa = kaa + delta * sp.identity(layout.na, format="csr")
    kua = asm.kua[iu][:, ia]

    r_u = asm.r_u[iu]
    corr_a = np.zeros(nn)
    corr_a[ia] = mu * m[ia] * (1.0 / s_d - 1.0 / s_at)
    r_a = (asm.r_alpha0 - corr_a)[ia]

    if layout.nk:
        kkk = (asm.kkk + sp.diags(m * (state.lam_kappa / s_k)))[ik][:, ik]
        kuk = asm.kuk[iu][:, ik]
        kka = asm.kak.T[ik][:, ia]
        mat = sp.bmat(
            [[kuu, kuk, kua], [kuk.T, kkk, kka], [kua.T, kka.T, kaa]], format="csr"
        )
        r_k = (asm.r_kappa0 - mu * m / s_k)[ik]
        rhs = np.concatenate([r_u, r_k, r_a])
    else:
        mat = sp.bmat([[kuu, kua], [kua.T, kaa]], format="csr")
        rhs = np.concatenate([r_u, r_a])
    return linalg.SparseSymmetric.from_scipy(mat), rhs


def _residual_norms(asm: AssembledSystem, state: SystemState, layout: _Layout, mask):
    r_lk, r_ld, r_lat = assemble_kkt(state, mask)
    res_u = float(np.abs(asm.r_u[layout.iu]).max()) if layout.nu else 0.0
    if layout.nk:
        res_k = max(float(np.abs(asm.r_kappa).max()), float(np.abs(r_lk).max()))
    else:
        res_k = 0.0
    res_a = max(
        float(np.abs(asm.r_alpha[layout.ia]).max()) if layout.na else 0.0,
        float(np.abs(r_ld[layout.ia]).max()) if layout.na else 0.0,
        float(np.abs(r_lat[layout.ia]).max()) if layout.na else 0.0,
    )
    return res_u, res_k, res_a


def _hessian_ud(asm: AssembledSystem, layout: _Layout) -> linalg.SparseSymmetric:
    """Equilibrium-damage Hessian with plastic variables fixed (raw blocks)."""
    kuu = asm.kuu[layout.iu][:, layout.iu]
    kaa = asm.kaa[layout.ia][:, layout.ia]
    kua = asm.kua[layout.iu][:, layout.ia]
    mat = sp.bmat([[kuu, kua], [kua.T, kaa]], format="csr")
    return linalg.SparseSymmetric.from_scipy(mat)


def _pinned_u_dofs(asm: AssembledSystem, disc: Discretization) -> np.ndarray:
    """Free displacement dofs with an exactly zero stiffness row (fully
    degraded surroundings); they are held fixed for the iteration."""
    diag = asm.kuu.diagonal()
    return disc.free_dofs[diag[disc.free_dofs] == 0.0]


def _solve_elastic_predictor(disc, state, params, with_plasticity):
    """One Newton step on the balance equation with frozen internal variables."""
    asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
    pinned = _pinned_u_dofs(asm, disc)
    free = np.setdiff1d(disc.free_dofs, pinned, assume_unique=True)
    if free.size == 0:
        return 0
    kuu = asm.kuu[free][:, free]
    f = linalg.factor(linalg.SparseSymmetric.from_scipy(kuu))
    du = f.solve(-asm.r_u[free])
    state.u[free] += du
    return 1


def starting_values(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    ip: IpParams,
    *,
    with_plasticity: bool,
):
    """Initialize the step: crack fixing, strictly feasible internal
    variables, an elastic displacement predictor, and Gertz-style duals
    from the affine direction.

    ``state`` enters as a copy of the previous step with the new imposed
    boundary values already written into ``state.u``; it is modified in
    place.  Returns ``(mask, delta0, n_factorizations)``.
    """
    inc = 1.0 - ip.crtol
    mask = state.alpha_n > ip.crtol
    state.alpha = np.where(
        mask, 1.0, np.minimum(state.alpha_n + inc, 0.5 * (state.alpha_n + 1.0))
    )
    if with_plasticity:
        state.kappa = state.kappa_n + inc
    else:
        state.kappa = state.kappa_n.copy()

    nfact = _solve_elastic_predictor(disc, state, params, with_plasticity)

    # Gertz et al. dual initialization from the affine-scaling direction
    unm = ~mask
    state.lam_kappa = np.ones_like(state.kappa) if with_plasticity else np.zeros_like(state.kappa)
    state.lam_d = np.where(unm, 1.0, 0.0)
    state.lam_at = np.where(unm, 1.0, 0.0)

    asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
    layout = _Layout(disc, mask, with_plasticity, _pinned_u_dofs(asm, disc))
    delta0, nf = stabilization_factor(
        _hessian_ud(asm, layout), 0.0, seed=ip.delta_seed, delta_max=ip.delta_max
    )
    nfact += nf
    mat, rhs = condense_monolithic(asm, state, layout, 0.0, delta0)
    fac = linalg.factor(mat)
    nfact += 1
    d = fac.solve(-rhs)
    _, dk, da = layout.split(d)
    s_k, s_d, s_at = _gaps(state, layout)
    if with_plasticity:
        dl = recover_dual(state.lam_kappa[layout.ik], s_k, dk, 0.0)
        state.lam_kappa[layout.ik] = np.maximum(1.0, np.abs(1.0 + dl))
    dl = recover_dual(state.lam_d[layout.ia], s_d, da, 0.0)
    state.lam_d[layout.ia] = np.maximum(1.0, np.abs(1.0 + dl))
    dl = recover_dual(state.lam_at[layout.ia], s_at, -da, 0.0)
    state.lam_at[layout.ia] = np.maximum(1.0, np.abs(1.0 + dl))
    return mask, delta0, nfact


def monolithic_solve(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    ip: IpParams,
    *,
    with_plasticity: bool,
    phase: str = "mono",
) -> SolveStats:
    """Monolithic interior-point solve of one quasi-static step.

    ``state`` carries the previous step in its ``*_n`` slots and the new
    imposed boundary displacements in ``state.u``; it is updated in place
    to the converged step.
    """
    stats = SolveStats()
    mask, delta_prev, nfact0 = starting_values(
        disc, state, params, ip, with_plasticity=with_plasticity
    )
    mu_last = np.inf
    nfact_carry = nfact0

    for k in range(1, ip.max_iter + 1):
        asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
        layout = _Layout(disc, mask, with_plasticity, _pinned_u_dofs(asm, disc))
        res_u, res_k, res_a = _residual_norms(asm, state, layout, mask)
        if max(res_u, res_k, res_a) <= ip.tol and mu_last <= ip.tol:
            return stats

        nfact = nfact_carry
        nfact_carry = 0
        delta, nf = stabilization_factor(
            _hessian_ud(asm, layout), delta_prev, seed=ip.delta_seed, delta_max=ip.delta_max
        )
        nfact += nf
        delta_prev = delta

        s_k, s_d, s_at = _gaps(state, layout)
        lam_k = state.lam_kappa[layout.ik]
        lam_d = state.lam_d[layout.ia]
        lam_at = state.lam_at[layout.ia]
        m_cur = duality_measure(
            ([(s_k, lam_k)] if layout.nk else []) + [(s_d, lam_d), (s_at, lam_at)]
        )

        mat, rhs_aff = condense_monolithic(asm, state, layout, 0.0, delta)
        fac = None
        while fac is None:
            try:
                fac = linalg.factor(mat)
                nfact += 1
            except linalg.SingularToWorkingPrecision:
                # bump the shift and retry; breakdown of the condensed
                # factorization plays the role of a failed inertia test
                nfact += 1
                delta = max(delta * 10.0, ip.delta_seed)
                if delta > ip.delta_max:
                    raise StabilizationOverflow("condensed system unfactorable")
                delta_prev = delta
                mat, rhs_aff = condense_monolithic(asm, state, layout, 0.0, delta)

        d_aff = fac.solve(-rhs_aff)
        du_a, dk_a, da_a = layout.split(d_aff)
        dl_k_a = recover_dual(lam_k, s_k, dk_a, 0.0) if layout.nk else np.empty(0)
        dl_d_a = recover_dual(lam_d, s_d, da_a, 0.0)
        dl_at_a = recover_dual(lam_at, s_at, -da_a, 0.0)

        gaps = np.concatenate([s_k, s_d, s_at])
        dgaps_a = np.concatenate([dk_a, da_a, -da_a])
        lams = np.concatenate([lam_k, lam_d, lam_at])
        dlams_a = np.concatenate([dl_k_a, dl_d_a, dl_at_a])
        tp_a = step_length_primal(gaps, dgaps_a, ip.tau)
        td_a = step_length_dual(lams, dlams_a, ip.tau)
        m_aff = duality_measure([(gaps + tp_a * dgaps_a, lams + td_a * dlams_a)])

        sigma, mu = barrier_parameter(
            m_aff, m_cur, None if not np.isfinite(mu_last) else mu_last,
            exponent=ip.sigma_exponent, growth_cap=ip.mu_growth_cap,
        )

        _, rhs = condense_monolithic(asm, state, layout, mu, delta)
        d = fac.solve(-rhs)
        du, dk, da = layout.split(d)
        dl_k = recover_dual(lam_k, s_k, dk, mu) if layout.nk else np.empty(0)
        dl_d = recover_dual(lam_d, s_d, da, mu)
        dl_at = recover_dual(lam_at, s_at, -da, mu)

        dgaps = np.concatenate([dk, da, -da])
        dlams = np.concatenate([dl_k, dl_d, dl_at])
        t_prim = step_length_primal(gaps, dgaps, ip.tau)
        t_dual = step_length_dual(lams, dlams, ip.tau)

        state.u[layout.iu] += t_prim * du
        if layout.nk:
            state.kappa[layout.ik] += t_prim * dk
            state.lam_kappa[layout.ik] += t_dual * dl_k
        state.alpha[layout.ia] += t_prim * da
        state.lam_d[layout.ia] += t_dual * dl_d
        state.lam_at[layout.ia] += t_dual * dl_at
        mu_last = mu

        stats.iterations.append(
            IterationRow(
                phase, k, res_u, res_k, res_a, mu, sigma, delta, t_prim, t_dual, nfact,
                asm.energy,
            )
        )

    raise MaxIterationsExceeded(
        f"monolithic solve did not converge in {ip.max_iter} iterations",
        diagnostics={
            "res_u": res_u,
            "res_kappa": res_k,
            "res_alpha": res_a,
            "mu": mu_last,
        },
    )
