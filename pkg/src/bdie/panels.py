"""Closed-form integrals of layer-potential kernels over flat triangles.

For a flat triangle T with unit normal n and an observation point y, the
integrals

    int_T  z_k(x) / |x-y|        dS      (single layer, P1 density)
    int_T  z_k(x) n.(x-y)/|x-y|^3 dS     (double layer, P1 density)

reduce to per-edge logarithms, per-edge arctangent pairs (whose sum is the
solid angle subtended by T at y), and the signed height of y over the panel
plane.  The formulas hold for any position of y: off the panel, on the
panel, or at its vertices, which is what makes vertex collocation and
Galerkin pairing on adjacent panels exact without singular quadrature.

The double-layer value for y in the panel plane is the principal value 0;
a relative height guard enforces this limit.

Conventions: triangles are (m, 3, 3) vertex arrays, observation points
(m, 3); entry i pairs triangle i with point i.  Densities z_k are the three
barycentric hat functions of the triangle.  All results omit the 1/(4 pi)
kernel normalisation; callers apply it.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-300
_PLANE_GUARD = 1e-9       # |d| below guard*diam counts as "in the panel plane"


def _geometry(tris, obs):
    """Shared per-pair edge/height quantities."""
    tris = np.asarray(tris, float)
    obs = np.asarray(obs, float)
    v1, v2, v3 = tris[:, 0], tris[:, 1], tris[:, 2]
    e_ab = np.stack([v2 - v1, v3 - v2, v1 - v3], axis=1)       # (m, 3edges, 3)
    a_pts = np.stack([v1, v2, v3], axis=1)
    b_pts = np.stack([v2, v3, v1], axis=1)
    cr = np.cross(v2 - v1, v3 - v1)
    two_area = np.linalg.norm(cr, axis=1)
    nhat = cr / two_area[:, None]
    d = np.einsum("ij,ij->i", nhat, obs - v1)                  # signed height
    p = obs - d[:, None] * nhat                                # in-plane projection

    ell = np.linalg.norm(e_ab, axis=2)
    shat = e_ab / ell[:, :, None]
    mhat = np.cross(shat, nhat[:, None, :])                    # outward in-plane

    t0 = np.einsum("mek,mek->me", mhat, a_pts - p[:, None, :])
    lm = np.einsum("mek,mek->me", shat, a_pts - p[:, None, :])
    lp = np.einsum("mek,mek->me", shat, b_pts - p[:, None, :])
    rm = np.linalg.norm(a_pts - obs[:, None, :], axis=2)
    rp = np.linalg.norm(b_pts - obs[:, None, :], axis=2)
    r0sq = t0**2 + d[:, None] ** 2

    # edge logarithm, conjugate branch when both projections are negative
    num = np.maximum(rp + lp, _TINY)
    den = np.maximum(rm + lm, _TINY)
    numc = np.maximum(rp - lp, _TINY)
    denc = np.maximum(rm - lm, _TINY)
    q = np.where(lp + lm > 0, np.log(num / den), np.log(denc / numc))

    # arctangent pairs; their sum is the (unsigned) solid angle
    absd = np.abs(d)[:, None]
    att = (np.arctan2(t0 * lp, r0sq + absd * rp)
           - np.arctan2(t0 * lm, r0sq + absd * rm))
    omega = att.sum(axis=1)

    diam = ell.max(axis=1)
    return {
        "nhat": nhat, "d": d, "p": p, "mhat": mhat, "t0": t0,
        "lm": lm, "lp": lp, "rm": rm, "rp": rp, "r0sq": r0sq,
        "q": q, "omega": omega, "diam": diam, "two_area": two_area,
        "v1": v1, "v2": v2, "v3": v3,
    }


def _bary_of_projection(g):
    """Barycentric coordinates of the in-plane projection (affine extension)."""
    d1 = g["v2"] - g["v1"]
    d2 = g["v3"] - g["v1"]
    rp = g["p"] - g["v1"]
    a11 = np.einsum("ij,ij->i", d1, d1)
    a12 = np.einsum("ij,ij->i", d1, d2)
    a22 = np.einsum("ij,ij->i", d2, d2)
    b1 = np.einsum("ij,ij->i", rp, d1)
    b2 = np.einsum("ij,ij->i", rp, d2)
    det = a11 * a22 - a12**2
    xi = (a22 * b1 - a12 * b2) / det
    eta = (a11 * b2 - a12 * b1) / det
    return np.stack([1.0 - xi - eta, xi, eta], axis=1)


def _p1_inplane_gradients(g):
    """In-plane gradients of the three hat functions, (m, 3verts, 3)."""
    # hat at vertex k varies across the edge opposite to k
    ell = np.stack([
        np.linalg.norm(g["v3"] - g["v2"], axis=1),   # edge opposite v1
        np.linalg.norm(g["v1"] - g["v3"], axis=1),
        np.linalg.norm(g["v2"] - g["v1"], axis=1),
    ], axis=1)
    mh = np.stack([g["mhat"][:, 1], g["mhat"][:, 2], g["mhat"][:, 0]], axis=1)
    return -mh * (ell / g["two_area"][:, None])[:, :, None]


def single_layer_p1(tris, obs):
    """int_T z_k(x)/|x-y| dS for the three hat densities; (m, 3)."""
    g = _geometry(tris, obs)
    absd = np.abs(g["d"])
    # uniform part
    i_unif = (g["t0"] * g["q"]).sum(axis=1) - absd * g["omega"]
    # first moment around the projection: sum_e mhat_e * int_e R dl
    edge_r = 0.5 * ((g["lp"] * g["rp"] - g["lm"] * g["rm"]) + g["r0sq"] * g["q"])
    i_vec = np.einsum("mek,me->mk", g["mhat"], edge_r)
    zeta_p = _bary_of_projection(g)
    grads = _p1_inplane_gradients(g)
    return zeta_p * i_unif[:, None] + np.einsum("mvk,mk->mv", grads, i_vec)


def single_layer_p0(tris, obs):
    """int_T 1/|x-y| dS; (m,)."""
    g = _geometry(tris, obs)
    return (g["t0"] * g["q"]).sum(axis=1) - np.abs(g["d"]) * g["omega"]


def solid_angle(tris, obs):
    """Signed solid angle of each triangle at its point (positive on the
    normal side); (m,)."""
    g = _geometry(tris, obs)
    return np.sign(g["d"]) * g["omega"]


def double_layer_p1(tris, obs):
    """int_T z_k(x) n.(x-y)/|x-y|^3 dS; (m, 3).

    Principal value (zero) when y lies in the panel plane.
    """
    g = _geometry(tris, obs)
    d = g["d"]
    in_plane = np.abs(d) <= _PLANE_GUARD * g["diam"]
    zeta_p = _bary_of_projection(g)
    grads = _p1_inplane_gradients(g)
    sum_mq = np.einsum("mek,me->mk", g["mhat"], g["q"])
    vals = (-np.sign(d)[:, None] * g["omega"][:, None] * zeta_p
            + d[:, None] * np.einsum("mvk,mk->mv", grads, sum_mq))
    vals[in_plane] = 0.0
    return vals


def double_layer_p0(tris, obs):
    """int_T n.(x-y)/|x-y|^3 dS = -(signed solid angle); (m,)."""
    g = _geometry(tris, obs)
    vals = -np.sign(g["d"]) * g["omega"]
    vals[np.abs(g["d"]) <= _PLANE_GUARD * g["diam"]] = 0.0
    return vals


def single_double_p1_and_p0(tris, obs):
    """One-pass evaluation of (single_layer_p1, double_layer_p1,
    single_layer_p0); shares the per-pair geometry."""
    g = _geometry(tris, obs)
    d = g["d"]
    absd = np.abs(d)
    zeta_p = _bary_of_projection(g)
    grads = _p1_inplane_gradients(g)

    i_unif = (g["t0"] * g["q"]).sum(axis=1) - absd * g["omega"]
    edge_r = 0.5 * ((g["lp"] * g["rp"] - g["lm"] * g["rm"]) + g["r0sq"] * g["q"])
    i_vec = np.einsum("mek,me->mk", g["mhat"], edge_r)
    sl = zeta_p * i_unif[:, None] + np.einsum("mvk,mk->mv", grads, i_vec)

    in_plane = absd <= _PLANE_GUARD * g["diam"]
    sum_mq = np.einsum("mek,me->mk", g["mhat"], g["q"])
    dl = (-np.sign(d)[:, None] * g["omega"][:, None] * zeta_p
          + d[:, None] * np.einsum("mvk,mk->mv", grads, sum_mq))
    dl[in_plane] = 0.0
    return sl, dl, i_unif
