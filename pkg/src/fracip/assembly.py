"""Global assembly of the coupled displacement / plasticity / damage system.

The discrete unknowns are nodal displacements ``u``, nodal equivalent
plastic strain ``kappa``, the nodal crack phase-field ``alpha``, and one
dual multiplier per nodal constraint (``kappa - kappa_n >= 0``,
``alpha - alpha_n >= 0``, ``1 - alpha >= 0``).  Plastic strain lives at the
2x2 Gauss points and is reconstructed from ``kappa`` through the frozen
trial flow direction; only its converged value is committed per step.

Quadrature split:

* bulk terms use the 2x2 Gauss rule;
* terms coupling to the dual multipliers use the nodal rule, which makes
  the coupling blocks diagonal (``coupling_diag`` below, positive);
* with selective reduced integration the volumetric elastic terms move to
  the one-point rule (used by the shear benchmark to avoid locking).

Dirichlet conditions are imposed by elimination; assembled residuals keep
the constrained rows so reactions can be read off directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from fracip._kernels import elem_kernel
from fracip.errors import DegenerateElement
from fracip.material import MaterialParams
from fracip.mesh import Mesh, gauss_rule, nodal_rule, reduced_rule, shape_functions

__all__ = [
    "Discretization",
    "SystemState",
    "AssembledSystem",
    "assemble_system",
    "assemble_kkt",
    "energy",
    "update_history",
    "reconstruct_eps_p",
    "history_damage_system",
    "assemble_residual_alpha_hf",
    "assemble_residual_alpha_al",
    "al_penalty",
]

N_GAUSS = 4


def _rule_tables(mesh: Mesh, rule):
    """Per-element wdet (ne, nq) and physical gradients (ne, nq, 4, 2)."""
    coords = mesh.nodes[mesh.elements]
    nq = rule.n_points
    ne = mesh.n_elements
    shp = np.empty((nq, 4))
    wdet = np.empty((ne, nq))
    dndx = np.empty((ne, nq, 4, 2))
    for q, (pt, w) in enumerate(zip(rule.points, rule.weights)):
        n, dn = shape_functions(*pt)
        shp[q] = n
        jac = np.einsum("ia,eib->eab", dn, coords)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise DegenerateElement(f"element {bad}: detJ = {det[bad]}")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]
        dndx[:, q] = np.einsum("ia,eba->eib", dn, inv)
        wdet[:, q] = w * det
    return shp, wdet, dndx


class Discretization:
    """Mesh plus cached quadrature tables, scatter indices and dof maps."""

    def __init__(self, mesh: Mesh, selective_reduced: bool = False):
        self.mesh = mesh
        self.selective_reduced = selective_reduced

        self.shp, self.wdet, self.dndx = _rule_tables(mesh, gauss_rule(2))
        if selective_reduced:
            self.shp_r, self.wdet_r, self.dndx_r = _rule_tables(mesh, reduced_rule())

        # nodal-rule lumped mass: the (negative of the) dual coupling blocks
        nodal = nodal_rule()
        _, wdet_n, _ = _rule_tables(mesh, nodal)
        diag = np.zeros(mesh.n_nodes)
        for c in range(4):
            np.add.at(diag, mesh.elements[:, c], wdet_n[:, c])
        self.coupling_diag = diag

        elements = mesh.elements
        self.edof = np.empty((mesh.n_elements, 8), dtype=np.int64)
        self.edof[:, 0::2] = 2 * elements
        self.edof[:, 1::2] = 2 * elements + 1

        self._scatter = {}

        fixed = np.zeros(mesh.n_dof, dtype=bool)
        for ds in mesh.dirichlet_sets.values():
            if ds.fix_x:
                fixed[2 * ds.nodes] = True
            if ds.fix_y:
                fixed[2 * ds.nodes + 1] = True
        self.fixed_mask = fixed
        self.free_dofs = np.nonzero(~fixed)[0]

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def n_dof(self) -> int:
        return self.mesh.n_dof

    def driven_dofs(self, set_name: str, component: str) -> np.ndarray:
        ds = self.mesh.dirichlet_sets[set_name]
        off = 0 if component == "x" else 1
        return 2 * ds.nodes + off

    def _indices(self, kind: str):
        """Cached COO scatter indices for one Jacobian block kind."""
        if kind in self._scatter:
            return self._scatter[kind]
        el = self.mesh.elements
        ed = self.edof
        if kind == "uu":
            rows = np.repeat(ed, 8, axis=1).ravel()
            cols = np.tile(ed, (1, 8)).ravel()
        elif kind == "nn":
            rows = np.repeat(el, 4, axis=1).ravel()
            cols = np.tile(el, (1, 4)).ravel()
        elif kind == "un":
            rows = np.repeat(ed, 4, axis=1).ravel()
            cols = np.tile(el, (1, 8)).ravel()
        else:
            raise ValueError(kind)
        self._scatter[kind] = (rows, cols)
        return rows, cols

    def _to_sparse(self, kind: str, values, shape) -> sp.csr_matrix:
        rows, cols = self._indices(kind)
        mat = sp.coo_matrix((values.ravel(), (rows, cols)), shape=shape)
        return mat.tocsr()

    def scatter_vec_u(self, vals) -> np.ndarray:
        return np.bincount(self.edof.ravel(), weights=vals.ravel(), minlength=self.n_dof)

    def scatter_vec_n(self, vals) -> np.ndarray:
        return np.bincount(
            self.mesh.elements.ravel(), weights=vals.ravel(), minlength=self.n_nodes
        )


@dataclass
class SystemState:
    """Primal fields, dual multipliers, and per-point plastic history.

    ``eps_p_n`` holds the committed (previous-step) plastic strain at the
    Gauss points in engineering Voigt form; the current plastic strain is
    implied by the flow rule and only written back by :meth:`commit`.
    """

    u: np.ndarray
    kappa: np.ndarray
    alpha: np.ndarray
    lam_kappa: np.ndarray
    lam_d: np.ndarray
    lam_at: np.ndarray
    u_n: np.ndarray
    kappa_n: np.ndarray
    alpha_n: np.ndarray
    eps_p_n: np.ndarray

    @classmethod
    def zeros(cls, disc: Discretization) -> "SystemState":
        nn, nd, ne = disc.n_nodes, disc.n_dof, disc.n_elements
        return cls(
            u=np.zeros(nd),
            kappa=np.zeros(nn),
            alpha=np.zeros(nn),
            lam_kappa=np.zeros(nn),
            lam_d=np.zeros(nn),
            lam_at=np.zeros(nn),
            u_n=np.zeros(nd),
            kappa_n=np.zeros(nn),
            alpha_n=np.zeros(nn),
            eps_p_n=np.zeros((ne, N_GAUSS, 4)),
        )

    def copy(self) -> "SystemState":
        return SystemState(**{k: v.copy() for k, v in self.__dict__.items()})

    def commit(self, disc: Discretization, params: MaterialParams, with_plasticity: bool):
        """Roll the converged step into the previous-step slots."""
        if with_plasticity:
            self.eps_p_n = reconstruct_eps_p(disc, self, params)
        self.u_n = self.u.copy()
        self.kappa_n = self.kappa.copy()
        self.alpha_n = self.alpha.copy()


@dataclass
class AssembledSystem:
    """Residual vectors and Jacobian blocks of the discrete system.

    ``r_kappa0`` / ``r_alpha0`` exclude the dual coupling terms;
    ``r_kappa`` / ``r_alpha`` include them.  ``coupling_diag`` is the nodal
    lumped mass M: the dual coupling Jacobians are -diag(M) for both lower
    bounds and +diag(M) for the upper bound.
    """

    r_u: np.ndarray
    r_kappa0: np.ndarray
    r_alpha0: np.ndarray
    r_kappa: np.ndarray
    r_alpha: np.ndarray
    coupling_diag: np.ndarray
    energy: float
    psi_plus: np.ndarray
    drive: np.ndarray
    kuu: sp.csr_matrix | None = None
    kkk: sp.csr_matrix | None = None
    kaa: sp.csr_matrix | None = None
    kuk: sp.csr_matrix | None = None
    kua: sp.csr_matrix | None = None
    kak: sp.csr_matrix | None = None
    drive_vol: np.ndarray | None = None


def _kernel_pass(disc, state, params, with_plasticity, need_jacobian, reduced):
    mesh = disc.mesh
    if reduced:
        shp, wdet, dndx = disc.shp_r, disc.wdet_r, disc.dndx_r
        include_vol, include_rest = 1, 0
        epn = np.zeros((mesh.n_elements, 1, 4))
    else:
        shp, wdet, dndx = disc.shp, disc.wdet, disc.dndx
        include_vol = 0 if disc.selective_reduced else 1
        include_rest = 1
        epn = state.eps_p_n
    return elem_kernel(
        wdet,
        shp,
        dndx,
        state.u[disc.edof],
        state.kappa[mesh.elements],
        state.kappa_n[mesh.elements],
        state.alpha[mesh.elements],
        epn,
        params.K,
        params.G,
        params.sigma_p,
        params.eta_p**2,
        params.eta_d**2,
        params.w0,
        int(params.model == "AT1"),
        int(with_plasticity),
        include_vol,
        include_rest,
        int(need_jacobian),
    )


def assemble_system(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    *,
    with_plasticity: bool,
    need_jacobian: bool = True,
) -> AssembledSystem:
    """Assemble residuals (and optionally all Jacobian blocks) at ``state``."""
    nn, nd = disc.n_nodes, disc.n_dof
    out = _kernel_pass(disc, state, params, with_plasticity, need_jacobian, reduced=False)
    drive_vol = None
    if disc.selective_reduced:
        out_v = _kernel_pass(disc, state, params, with_plasticity, need_jacobian, reduced=True)
        for key in ("r_u", "r_a", "energy"):
            out[key] = out[key] + out_v[key]
        if need_jacobian:
            for key in ("kuu", "kaa", "kua"):
                out[key] = out[key] + out_v[key]
        drive_vol = out_v["psi_plus"]

    r_u = disc.scatter_vec_u(out["r_u"])
    r_kappa0 = disc.scatter_vec_n(out["r_k"])
    r_alpha0 = disc.scatter_vec_n(out["r_a"])
    m = disc.coupling_diag
    r_kappa = r_kappa0 - m * state.lam_kappa
    r_alpha = r_alpha0 - m * (state.lam_d - state.lam_at)

    asm = AssembledSystem(
        r_u=r_u,
        r_kappa0=r_kappa0,
        r_alpha0=r_alpha0,
        r_kappa=r_kappa,
        r_alpha=r_alpha,
        coupling_diag=m,
        energy=float(out["energy"].sum()),
        psi_plus=out["psi_plus"],
        drive=out["drive"],
        drive_vol=drive_vol,
    )
    if need_jacobian:
        asm.kuu = disc._to_sparse("uu", out["kuu"], (nd, nd))
        asm.kaa = disc._to_sparse("nn", out["kaa"], (nn, nn))
        asm.kua = disc._to_sparse("un", out["kua"], (nd, nn))
        if with_plasticity:
            asm.kkk = disc._to_sparse("nn", out["kkk"], (nn, nn))
            asm.kuk = disc._to_sparse("un", out["kuk"], (nd, nn))
            asm.kak = disc._to_sparse("nn", out["kak"], (nn, nn))
    return asm


def assemble_kkt(state: SystemState, masked: np.ndarray | None = None):
    """Componentwise complementarity products of the discrete KKT system.

    Rows of masked (crack-fixed) nodes are zero: their constraints are
    removed from the system.
    """
    r_lk = state.lam_kappa * (state.kappa - state.kappa_n)
    r_ld = state.lam_d * (state.alpha - state.alpha_n)
    r_lat = state.lam_at * (1.0 - state.alpha)
    if masked is not None:
        r_ld = np.where(masked, 0.0, r_ld)
        r_lat = np.where(masked, 0.0, r_lat)
    return r_lk, r_ld, r_lat


def energy(
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    *,
    with_plasticity: bool,
) -> float:
    """Total incremental energy functional (N mm) at ``state``."""
    return assemble_system(
        disc, state, params, with_plasticity=with_plasticity, need_jacobian=False
    ).energy


def reconstruct_eps_p(
    disc: Discretization, state: SystemState, params: MaterialParams
) -> np.ndarray:
    """Per-point plastic strain implied by the flow rule at the current state."""
    mesh = disc.mesh
    ke = state.kappa[mesh.elements]
    kne = state.kappa_n[mesh.elements]
    ae = state.alpha[mesh.elements]
    ux = state.u[disc.edof][:, 0::2]
    uy = state.u[disc.edof][:, 1::2]
    eps_p = np.empty_like(state.eps_p_n)
    for q in range(N_GAUSS):
        n_shape = disc.shp[q]
        dnx = disc.dndx[:, q, :, 0]
        dny = disc.dndx[:, q, :, 1]
        exx = np.einsum("ei,ei->e", dnx, ux)
        eyy = np.einsum("ei,ei->e", dny, uy)
        gxy = np.einsum("ei,ei->e", dny, ux) + np.einsum("ei,ei->e", dnx, uy)
        alpha_q = ae @ n_shape
        g = (1.0 - alpha_q) ** 2
        dk = (ke - kne) @ n_shape
        pn = state.eps_p_n[:, q, :]
        m = (exx + eyy) / 3.0
        t = np.stack(
            [exx - m - pn[:, 0], eyy - m - pn[:, 1], -m - pn[:, 2], 0.5 * gxy - 0.5 * pn[:, 3]],
            axis=1,
        )
        nrm = np.sqrt(t[:, 0] ** 2 + t[:, 1] ** 2 + t[:, 2] ** 2 + 2.0 * t[:, 3] ** 2)
        active = (g * nrm) > 0.0
        inv = np.where(active, 1.0 / np.where(nrm > 0, nrm, 1.0), 0.0)
        fac = np.sqrt(1.5) * dk * inv
        eps_p[:, q, 0] = pn[:, 0] + fac * t[:, 0]
        eps_p[:, q, 1] = pn[:, 1] + fac * t[:, 1]
        eps_p[:, q, 2] = pn[:, 2] + fac * t[:, 2]
        eps_p[:, q, 3] = pn[:, 3] + 2.0 * fac * t[:, 3]
    return eps_p


def update_history(
    history: np.ndarray,
    disc: Discretization,
    state: SystemState,
    params: MaterialParams,
    *,
    with_plasticity: bool,
) -> np.ndarray:
    """Pointwise running maximum of the damage driving energy."""
    if disc.selective_reduced:
        raise ValueError("the history field is incompatible with selective reduced integration")
    asm = assemble_system(
        disc, state, params, with_plasticity=with_plasticity, need_jacobian=False
    )
    return np.maximum(history, asm.drive)


def history_damage_system(disc: Discretization, history: np.ndarray, params: MaterialParams):
    """Linear system A alpha = b of the history-field damage equation."""
    mesh = disc.mesh
    nn = disc.n_nodes
    w0, eta_d2 = params.w0, params.eta_d**2
    at1 = params.model == "AT1"
    wpp = 0.0 if at1 else 2.0 * w0
    w1 = w0 if at1 else 0.0

    a_el = np.zeros((disc.n_elements, 4, 4))
    b_el = np.zeros((disc.n_elements, 4))
    for q in range(N_GAUSS):
        n_shape = disc.shp[q]
        w = disc.wdet[:, q]
        h = history[:, q]
        dnx = disc.dndx[:, q, :, 0]
        dny = disc.dndx[:, q, :, 1]
        nn_blk = np.outer(n_shape, n_shape)
        gradgrad = np.einsum("ei,ej->eij", dnx, dnx) + np.einsum("ei,ej->eij", dny, dny)
        a_el += w[:, None, None] * (
            nn_blk[None, :, :] * (2.0 * h + wpp)[:, None, None] + eta_d2 * gradgrad
        )
        b_el += (w * (2.0 * h - w1))[:, None] * n_shape[None, :]
    a_mat = disc._to_sparse("nn", a_el, (nn, nn))
    b = disc.scatter_vec_n(b_el)
    return a_mat, b


def assemble_residual_alpha_hf(
    disc: Discretization, state: SystemState, history: np.ndarray, params: MaterialParams
):
    """History-field damage residual and tangent at ``state.alpha``."""
    a_mat, b = history_damage_system(disc, history, params)
    return a_mat @ state.alpha - b, a_mat


def al_penalty(alpha, alpha_n, xi, gamma):
    """Moreau-Yosida penalty value and the active-set mask of its tangent."""
    lo = xi + gamma * (alpha - alpha_n)
    hi = xi + gamma * (alpha - 1.0)
    pen = np.minimum(lo, 0.0) + np.maximum(hi, 0.0)
    active = (lo < 0.0) | (hi > 0.0)
    return pen, active


def assemble_residual_alpha_al(
    disc: Discretization,
    state: SystemState,
    xi: np.ndarray,
    gamma: float,
    params: MaterialParams,
    *,
    with_plasticity: bool,
):
    """Augmented-Lagrangian damage residual and tangent at ``state``.

    The penalty terms are integrated with the nodal rule (like the dual
    terms they replace), so they contribute a diagonal.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    asm = assemble_system(disc, state, params, with_plasticity=with_plasticity)
    pen, active = al_penalty(state.alpha, state.alpha_n, xi, gamma)
    m = disc.coupling_diag
    residual = asm.r_alpha0 + m * pen
    tangent = asm.kaa + sp.diags(m * gamma * active)
    return residual, tangent
