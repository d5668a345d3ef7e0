"""Pure numpy twin of the per-element integration kernel.

Evaluates residual and Jacobian contributions of the coupled
displacement / plastic-strain / damage system on a batch of bilinear
quadrilaterals, vectorized over elements, one quadrature point at a time.

Conventions (plane strain, Voigt length 4):

* strain-like vectors are (xx, yy, zz, gamma_xy) with engineering shear;
* stress-like vectors are (xx, yy, zz, tau_xy) with tensor shear;
* plastic strain is stored in engineering convention per quadrature point;
* the plastic flow direction is a unit deviator in tensor components.

``include_vol`` / ``include_rest`` split the volumetric elastic terms from
everything else so that selective reduced integration can run the kernel
twice with different quadrature rules.
"""

import numpy as np

SQ32 = np.sqrt(1.5)


def elem_kernel(
    wdet,
    shp,
    dndx,
    ue,
    ke,
    kne,
    ae,
    epn,
    K,
    G,
    sigma_p,
    eta_p2,
    eta_d2,
    w0,
    at1,
    plastic,
    include_vol,
    include_rest,
    want_jacobian,
):
    """Integrate element residuals/Jacobians over all quadrature points.

    Parameters
    ----------
    wdet : (ne, nq) quadrature weight times Jacobian determinant
    shp : (nq, 4) shape function values at the reference points
    dndx : (ne, nq, 4, 2) physical shape gradients
    ue : (ne, 8) element displacements, interleaved (x0, y0, x1, y1, ...)
    ke, kne, ae : (ne, 4) nodal kappa, kappa_n, alpha
    epn : (ne, nq, 4) previous-step plastic strain (engineering Voigt)

    Returns
    -------
    dict with residual blocks ``r_u`` (ne, 8), ``r_k``/``r_a`` (ne, 4),
    Jacobian blocks ``kuu`` (ne, 8, 8), ``kkk``/``kaa``/``kak`` (ne, 4, 4),
    ``kuk``/``kua`` (ne, 8, 4), per-point ``psi_plus``/``drive`` (ne, nq)
    (always the full unsplit values), and the element ``energy`` (ne,).
    """
    ne, nq = wdet.shape
    r_u = np.zeros((ne, 8))
    r_k = np.zeros((ne, 4))
    r_a = np.zeros((ne, 4))
    kuu = np.zeros((ne, 8, 8)) if want_jacobian else None
    kkk = np.zeros((ne, 4, 4)) if want_jacobian and plastic else None
    kaa = np.zeros((ne, 4, 4)) if want_jacobian else None
    kuk = np.zeros((ne, 8, 4)) if want_jacobian and plastic else None
    kua = np.zeros((ne, 8, 4)) if want_jacobian else None
    kak = np.zeros((ne, 4, 4)) if want_jacobian and plastic else None
    psi_plus = np.zeros((ne, nq))
    drive = np.zeros((ne, nq))
    energy = np.zeros(ne)

    ux = ue[:, 0::2]
    uy = ue[:, 1::2]

    for q in range(nq):
        N = shp[q]
        dnx = dndx[:, q, :, 0]
        dny = dndx[:, q, :, 1]
        w = wdet[:, q]

        alpha_q = ae @ N
        one_m_a = 1.0 - alpha_q
        g = one_m_a**2
        gp = -2.0 * one_m_a

        exx = np.einsum("ei,ei->e", dnx, ux)
        eyy = np.einsum("ei,ei->e", dny, uy)
        gxy = np.einsum("ei,ei->e", dny, ux) + np.einsum("ei,ei->e", dnx, uy)
        tr = exx + eyy

        if plastic:
            kappa_q = ke @ N
            dk = kappa_q - (kne @ N)
            gkx = np.einsum("ei,ei->e", dnx, ke)
            gky = np.einsum("ei,ei->e", dny, ke)
            gradk2 = gkx**2 + gky**2
            pn = epn[:, q, :]
            # trial elastic deviator (tensor components)
            m = tr / 3.0
            t0 = exx - m - pn[:, 0]
            t1 = eyy - m - pn[:, 1]
            t2 = -m - pn[:, 2]
            t3 = 0.5 * gxy - 0.5 * pn[:, 3]
            nrm = np.sqrt(t0**2 + t1**2 + t2**2 + 2.0 * t3**2)
            smag = 2.0 * g * G * nrm
            active = smag > 0.0
            inv = np.where(nrm > 0.0, 1.0 / np.where(nrm > 0.0, nrm, 1.0), 0.0)
            inv = np.where(active, inv, 0.0)
            n0, n1, n2, n3 = t0 * inv, t1 * inv, t2 * inv, t3 * inv
            fac = SQ32 * dk
            p0 = pn[:, 0] + fac * n0
            p1 = pn[:, 1] + fac * n1
            p2 = pn[:, 2] + fac * n2
            p3 = pn[:, 3] + 2.0 * fac * n3
        else:
            kappa_q = np.zeros(ne)
            dk = np.zeros(ne)
            gkx = gky = np.zeros(ne)
            gradk2 = np.zeros(ne)
            smag = np.zeros(ne)
            n0 = n1 = n2 = n3 = np.zeros(ne)
            p0 = p1 = p2 = p3 = np.zeros(ne)

        # elastic strain (engineering) and its tensor deviator
        e0 = exx - p0
        e1 = eyy - p1
        e2 = -p2
        e3g = gxy - p3
        tre = e0 + e1 + e2
        mm = tre / 3.0
        d0 = e0 - mm
        d1 = e1 - mm
        d2 = e2 - mm
        d3 = 0.5 * e3g
        devdev = d0**2 + d1**2 + d2**2 + 2.0 * d3**2

        pos = tre >= 0.0
        psi_vol_pos = np.where(pos, 0.5 * K * tre**2, 0.0)
        psi_vol_neg = np.where(pos, 0.0, 0.5 * K * tre**2)
        psi_dev = G * devdev

        psi_plus[:, q] = psi_vol_pos + psi_dev
        drive[:, q] = psi_plus[:, q] + sigma_p * kappa_q + 0.5 * eta_p2 * gradk2

        gax = np.einsum("ei,ei->e", dnx, ae)
        gay = np.einsum("ei,ei->e", dny, ae)

        # effective (rule-split) energy pieces
        psi_plus_eff = include_vol * psi_vol_pos + include_rest * psi_dev
        drive_eff = psi_plus_eff + include_rest * (
            sigma_p * kappa_q + 0.5 * eta_p2 * gradk2
        )

        # stress (volumetric branch assigns tr >= 0 to the degraded part)
        svol_pos = np.where(pos, K * tre, 0.0)
        svol_neg = np.where(pos, 0.0, K * tre)
        svol = include_vol * (g * svol_pos + svol_neg)
        cdev = include_rest * 2.0 * G * g
        s0 = svol + cdev * d0
        s1 = svol + cdev * d1
        s2 = svol + cdev * d2
        s3 = cdev * d3

        # interleaved scatter of B^T sigma
        bt0 = dnx * s0[:, None] + dny * s3[:, None]
        bt1 = dny * s1[:, None] + dnx * s3[:, None]
        r_u[:, 0::2] += w[:, None] * bt0
        r_u[:, 1::2] += w[:, None] * bt1

        if plastic:
            y = include_rest * (-SQ32 * smag + g * (sigma_p + 3.0 * G * dk))
            r_k += w[:, None] * (
                N[None, :] * y[:, None]
                + include_rest * eta_p2 * g[:, None] * (dnx * gkx[:, None] + dny * gky[:, None])
            )

        if at1:
            wval = w0 * alpha_q
            wprime = np.full(ne, w0)
            wpp = 0.0
        else:
            wval = w0 * alpha_q**2
            wprime = 2.0 * w0 * alpha_q
            wpp = 2.0 * w0

        r_a += w[:, None] * (
            N[None, :] * (gp * drive_eff + include_rest * wprime)[:, None]
            + include_rest * eta_d2 * (dnx * gax[:, None] + dny * gay[:, None])
        )

        energy += w * (
            include_vol * (g * psi_vol_pos + psi_vol_neg)
            + include_rest
            * (
                g * psi_dev
                + wval
                + 0.5 * eta_d2 * (gax**2 + gay**2)
                + g * (sigma_p * kappa_q + 0.5 * eta_p2 * gradk2)
            )
        )

        if not want_jacobian:
            continue

        # divergence operator B^T vol, interleaved
        div = np.zeros((ne, 8))
        div[:, 0::2] = dnx
        div[:, 1::2] = dny
        kv = include_vol * K * np.where(pos, g, 1.0)
        kuu += w[:, None, None] * kv[:, None, None] * div[:, :, None] * div[:, None, :]

        # deviatoric stiffness: B^T C_dev B assembled directly from gradients
        if include_rest:
            cg = 2.0 * G * g * w
            # normal rows (tensor deviatoric projector) and shear row
            bx = np.zeros((ne, 3, 8))
            bx[:, 0, 0::2] = dnx
            bx[:, 1, 1::2] = dny
            # zz strain row is zero for displacements
            dev_n = bx - bx.sum(axis=1, keepdims=True) / 3.0
            kuu += cg[:, None, None] * np.einsum("eri,erj->eij", dev_n, bx)
            bshear = np.zeros((ne, 8))
            bshear[:, 0::2] = dny
            bshear[:, 1::2] = dnx
            kuu += 0.5 * cg[:, None, None] * bshear[:, :, None] * bshear[:, None, :]

        NN = np.outer(N, N)
        gradgrad = np.einsum("ei,ej->eij", dnx, dnx) + np.einsum("ei,ej->eij", dny, dny)

        kaa += w[:, None, None] * (
            NN[None, :, :] * (2.0 * drive_eff + include_rest * wpp)[:, None, None]
            + include_rest * eta_d2 * gradgrad
        )

        if plastic and include_rest:
            kkk += w[:, None, None] * g[:, None, None] * (
                3.0 * G * NN[None, :, :] + eta_p2 * gradgrad
            )
            btn0 = dnx * n0[:, None] + dny * n3[:, None]
            btn1 = dny * n1[:, None] + dnx * n3[:, None]
            btn = np.zeros((ne, 8))
            btn[:, 0::2] = btn0
            btn[:, 1::2] = btn1
            kuk += (-SQ32 * 2.0 * G) * (w * g)[:, None, None] * btn[:, :, None] * N[None, None, :]

            dn = d0 * n0 + d1 * n1 + d2 * n2 + 2.0 * d3 * n3
            row = (
                (-SQ32 * 2.0 * G * dn + sigma_p)[:, None] * N[None, :]
                + eta_p2 * (dnx * gkx[:, None] + dny * gky[:, None])
            )
            kak += (w * gp)[:, None, None] * N[None, :, None] * row[:, None, :]

        # K_ua: derivative of r_u w.r.t. alpha through g(alpha)
        sp0 = include_vol * svol_pos + include_rest * 2.0 * G * d0
        sp1 = include_vol * svol_pos + include_rest * 2.0 * G * d1
        sp3 = include_rest * 2.0 * G * d3
        btp = np.zeros((ne, 8))
        btp[:, 0::2] = dnx * sp0[:, None] + dny * sp3[:, None]
        btp[:, 1::2] = dny * sp1[:, None] + dnx * sp3[:, None]
        kua += (w * gp)[:, None, None] * btp[:, :, None] * N[None, None, :]

    out = {
        "r_u": r_u,
        "r_k": r_k,
        "r_a": r_a,
        "psi_plus": psi_plus,
        "drive": drive,
        "energy": energy,
    }
    if want_jacobian:
        out.update({"kuu": kuu, "kkk": kkk, "kaa": kaa, "kuk": kuk, "kua": kua, "kak": kak})
    return out
