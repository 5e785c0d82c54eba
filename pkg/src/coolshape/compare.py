"""Field differences between two state solutions on compatible meshes."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .fem import mass_matrix_p1
from .generator import GeneratorParams
from .mesh import MeshError
from .physics import DarcyParams, PhysicalParams, channel_mass_fluxes


def matched_darcy_params(gen: GeneratorParams, params: PhysicalParams, eps_relax=1e-5):
    """Homogenized block parameters for straight channels of the generator geometry.

    Porosity is the channel fraction of the pitch. The permeability follows
    from the fully developed thickness-reduced duct flow, whose lateral
    profile decays with rate sqrt(10)/h; the exchange coefficient spreads the
    lid, bottom and side-wall heat transfer of one channel over its pitch.
    """
    w, h, pitch = gen.channel_width, params.h, gen.pitch
    phi = w / pitch
    z = np.sqrt(10.0) / h * w / 2
    k_hat = phi * (2 / 3) * (h**2 / 8) * (1 - np.tanh(z) / z)
    h_fs = 2 * params.alpha * (w + h) / (pitch * h)
    return DarcyParams(phi=phi, k_hat=float(k_hat), h_fs=float(h_fs), eps_relax=eps_relax)


def common_vertices(mesh_a, mesh_b, rtol=1e-9):
    """Indices (ia, ib) of vertices present in both meshes at the same position."""
    tol = rtol * max(mesh_a.diameter, mesh_b.diameter)
    tree = cKDTree(mesh_b.vertices)
    dist, ib = tree.query(mesh_a.vertices)
    ia = np.flatnonzero(dist <= tol)
    if len(ia) < 3:
        raise MeshError("geometry mismatch: the meshes share no vertices")
    return ia, ib[ia]


def _norms(ref, other, weights):
    d = other - ref
    l2 = np.sqrt(np.sum(weights * d**2))
    l2_ref = np.sqrt(np.sum(weights * ref**2))
    l1 = np.sum(weights * np.abs(d))
    l1_ref = np.sum(weights * np.abs(ref))
    linf_ref = np.abs(ref).max()
    return {
        "l2": float(l2 / l2_ref) if l2_ref > 0 else float(l2),
        "l1": float(l1 / l1_ref) if l1_ref > 0 else float(l1),
        "linf": float(np.abs(d).max() / linf_ref) if linf_ref > 0 else float(np.abs(d).max()),
    }


def compare_states(ref, other, n_bins=None):
    """Relative L2/L1/Linf differences of pressure and of T - T_in, plus channel fluxes.

    Norms use the lumped P1 mass of ``ref`` restricted to the shared vertices,
    which must cover every vertex of ``ref``.
    """
    ia, ib = common_vertices(ref.mesh, other.mesh)
    if len(ia) != ref.mesh.n_vertices:
        ia, ib = common_vertices(other.mesh, ref.mesh)
        if len(ia) != other.mesh.n_vertices:
            raise MeshError("geometry mismatch: neither mesh's vertices lie in the other")
        ref, other = other, ref
        ia, ib = ib, ia
        swapped = True
    else:
        swapped = False
    weights = np.asarray(mass_matrix_p1(ref.mesh).sum(axis=1)).ravel()[ia]
    T_in = ref.params.T_in
    report = {
        "pressure": _norms(ref.pressure[ia], other.pressure[ib], weights),
        "temperature": _norms(ref.temperature[ia] - T_in, other.temperature[ib] - T_in, weights),
        "reference_swapped": swapped,
    }
    nb = n_bins or (ref.mesh.n_channels or other.mesh.n_channels or None)
    fa = channel_mass_fluxes(ref, n_bins=nb)
    fb = channel_mass_fluxes(other, n_bins=nb)
    if len(fa) == len(fb):
        report["channel_fluxes"] = {
            "reference": fa.tolist(),
            "other": fb.tolist(),
            "max_relative": float(np.abs(fb - fa).max() / np.abs(fa).max()) if fa.any() else 0.0,
        }
    return report
