"""Constitutive model: degradation, damage dissipation, volumetric-deviatoric
energy split, stress, and the incremental non-local plasticity kinematics.

Voigt-4 conventions (plane strain, components xx, yy, zz, "xy"):

* strain-like vectors carry engineering shear (gamma = 2 eps_12);
* stress-like vectors carry tensor shear (tau_12);
* the plastic flow direction returned by :func:`trial_state` is a unit
  deviator in tensor components.

All norms and double contractions that the model prescribes on tensors are
evaluated in tensor components; the helpers below do the bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

__all__ = [
    "MaterialParams",
    "SplitEnergies",
    "VOL",
    "degradation",
    "dissipation",
    "energy_split",
    "constitutive_matrices",
    "full_stiffness",
    "stress",
    "trial_state",
    "plastic_strain_update",
    "tensor_norm_strain",
    "tensor_norm_stress",
    "dev_strain",
]

SQ32 = np.sqrt(1.5)

# volumetric direction: tr(eps) = VOL . eps for engineering strain vectors
VOL = np.array([1.0, 1.0, 1.0, 0.0])


@dataclass(frozen=True)
class MaterialParams:
    """Elastic, plastic, and damage constants.

    Units: moduli and strength in MPa, length scales eta_p / eta_d in
    N^(1/2).  ``sigma_p = 0`` together with a scheme that omits the plastic
    problem gives the brittle model.
    """

    K: float
    G: float
    w0: float
    eta_d: float
    model: Literal["AT1", "AT2"] = "AT2"
    sigma_p: float = 0.0
    eta_p: float = 0.0

    def __post_init__(self):
        if self.K <= 0 or self.G <= 0:
            raise ValueError("elastic moduli must be positive")
        if self.w0 <= 0 or self.eta_d <= 0:
            raise ValueError("damage constants must be positive")
        if self.sigma_p < 0 or self.eta_p < 0:
            raise ValueError("plastic constants must be non-negative")
        if self.model not in ("AT1", "AT2"):
            raise ValueError(f"unknown model {self.model!r}")

    @property
    def ell_d(self) -> float:
        """Damage characteristic length (mm)."""
        return self.eta_d / np.sqrt(2.0 * self.w0)

    @property
    def ell_p(self) -> float:
        """Plastic characteristic length (mm); defined for sigma_p > 0."""
        if self.sigma_p <= 0:
            raise ValueError("ell_p requires sigma_p > 0")
        return self.eta_p / np.sqrt(self.sigma_p)


@dataclass(frozen=True)
class SplitEnergies:
    psi_plus: float
    psi_minus: float


def tensor_norm_strain(v) -> float:
    """Frobenius norm of a strain-like (engineering shear) Voigt-4 vector."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2 + 2.0 * (0.5 * v[3]) ** 2))

def tensor_norm_stress(v) -> float:
    """Frobenius norm of a stress-like (tensor shear) Voigt-4 vector."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2 + 2.0 * v[3] ** 2))


def dev_strain(eps) -> np.ndarray:
    """Deviator of an engineering strain vector, in tensor components."""
    eps = np.asarray(eps, dtype=float)
    m = (eps[0] + eps[1] + eps[2]) / 3.0
    return np.array([eps[0] - m, eps[1] - m, eps[2] - m, 0.5 * eps[3]])


def degradation(alpha: float):
    """Quadratic degradation g = (1 - alpha)^2 and its first two derivatives."""
    one_m = 1.0 - alpha
    return one_m * one_m, -2.0 * one_m, 2.0


def dissipation(alpha: float, params: MaterialParams):
    """Local damage dissipation (w, w', w'') for the configured model."""
    w0 = params.w0
    if params.model == "AT1":
        return w0 * alpha, w0, 0.0
    return w0 * alpha * alpha, 2.0 * w0 * alpha, 2.0 * w0


def _elastic_strain(eps, eps_p):
    eps = np.asarray(eps, dtype=float)
    eps_p = np.asarray(eps_p, dtype=float)
    return eps - eps_p


def energy_split(eps, eps_p, params: MaterialParams) -> SplitEnergies:
    """Volumetric-deviatoric split of the elastic energy density.

    Only the positive volumetric part and the full deviatoric part are
    degradable; pure compression survives degradation.
    """
    ee = _elastic_strain(eps, eps_p)
    tre = ee[0] + ee[1] + ee[2]
    dev = dev_strain(ee)
    devdev = dev[0] ** 2 + dev[1] ** 2 + dev[2] ** 2 + 2.0 * dev[3] ** 2
    vol = 0.5 * params.K * tre * tre
    if tre >= 0.0:
        return SplitEnergies(vol + params.G * devdev, 0.0)
    return SplitEnergies(params.G * devdev, vol)


def _c_dev(G: float) -> np.ndarray:
    c = np.zeros((4, 4))
    proj = np.eye(3) - np.ones((3, 3)) / 3.0
    c[:3, :3] = 2.0 * G * proj
    c[3, 3] = G
    return c


def constitutive_matrices(eps, eps_p, params: MaterialParams):
    """Tangents (C_plus, C_minus) of the split energy, acting on engineering
    strain vectors.  The tr(eps_e) >= 0 branch assigns the volumetric block
    to C_plus."""
    ee = _elastic_strain(eps, eps_p)
    tre = ee[0] + ee[1] + ee[2]
    cvol = params.K * np.outer(VOL, VOL)
    c_plus = _c_dev(params.G)
    c_minus = np.zeros((4, 4))
    if tre >= 0.0:
        c_plus = c_plus + cvol
    else:
        c_minus = cvol
    return c_plus, c_minus


def full_stiffness(params: MaterialParams) -> np.ndarray:
    """Undamaged isotropic stiffness C = K vol x vol + C_dev."""
    return params.K * np.outer(VOL, VOL) + _c_dev(params.G)


def stress(eps, eps_p, alpha: float, params: MaterialParams) -> np.ndarray:
    """Degraded stress g(alpha) dpsi+/deps + dpsi-/deps (stress Voigt-4)."""
    ee = _elastic_strain(eps, eps_p)
    tre = ee[0] + ee[1] + ee[2]
    dev = dev_strain(ee)
    g, _, _ = degradation(alpha)
    s_dev = 2.0 * params.G * dev
    if tre >= 0.0:
        return g * (params.K * tre * VOL + s_dev)
    return params.K * tre * VOL + g * s_dev


def trial_state(eps, eps_p_n, alpha: float, params: MaterialParams):
    """Deviatoric trial stress, plastic flow direction, and trial norm.

    Returns ``(sigma_dev_tr, n_hat_tr, norm)`` with the stress in tensor
    shear components and ``n_hat_tr`` a unit deviator (Frobenius norm 1) or
    zero when the trial deviator vanishes.
    """
    eps = np.asarray(eps, dtype=float)
    eps_p_n = np.asarray(eps_p_n, dtype=float)
    g, _, _ = degradation(alpha)
    e_tr = dev_strain(eps) - dev_strain(eps_p_n)
    s_tr = 2.0 * g * params.G * e_tr
    norm = tensor_norm_stress(s_tr)
    if norm > 0.0:
        n_hat = e_tr / tensor_norm_stress(e_tr)
    else:
        n_hat = np.zeros(4)
    return s_tr, n_hat, norm


def plastic_strain_update(kappa: float, kappa_n: float, eps_p_n, n_hat_tr) -> np.ndarray:
    """Incremental associative flow: eps_p = eps_p_n + sqrt(3/2) n (kappa - kappa_n).

    ``eps_p_n`` is an engineering strain vector, ``n_hat_tr`` a tensor-form
    unit deviator; the result is engineering again.
    """
    eps_p_n = np.asarray(eps_p_n, dtype=float)
    n = np.asarray(n_hat_tr, dtype=float)
    n_eng = np.array([n[0], n[1], n[2], 2.0 * n[3]])
    return eps_p_n + SQ32 * (kappa - kappa_n) * n_eng
