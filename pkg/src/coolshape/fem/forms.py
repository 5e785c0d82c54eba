"""Reusable local kernels: P1/P2 mass, stiffness and convection blocks."""

import numpy as np

from .assembly import assemble_matrix


def p1_mass_local(itg, coeff=None):
    w = itg.dx if coeff is None else itg.dx * _cellwise(coeff, itg)
    return np.einsum("cq,qi,qj->cij", w, itg.phi1, itg.phi1)


def p1_stiffness_local(itg, coeff=None):
    c = itg.mesh.areas if coeff is None else itg.mesh.areas * np.asarray(coeff)
    g = itg.dphi1
    return c[:, None, None] * np.einsum("cid,cjd->cij", g, g)


def p2_mass_local(itg, coeff=None):
    w = itg.dx if coeff is None else itg.dx * _cellwise(coeff, itg)
    return np.einsum("cq,qi,qj->cij", w, itg.phi2, itg.phi2)


def p2_stiffness_local(itg, coeff=None):
    w = itg.dx if coeff is None else itg.dx * _cellwise(coeff, itg)
    return np.einsum("cq,cqid,cqjd->cij", w, itg.dphi2, itg.dphi2)


def p1_convection_local(itg, velocity, coeff=1.0):
    """Rows: P1 test S_i; cols: P1 trial T_j; entry int coeff (w . grad T_j) S_i."""
    return coeff * np.einsum("cq,cqd,cjd,qi->cij", itg.dx, velocity, itg.dphi1, itg.phi1)


def p1_facet_mass_local(itg, facets, coeff=1.0):
    """Boundary mass on selected facets, (nf, 2, 2)."""
    w = itg.ds[facets] * coeff
    return np.einsum("fq,qi,qj->fij", w, itg.facet_phi1, itg.facet_phi1)


def p1_facet_load_local(itg, facets, density):
    """int density * phi_i ds with density given at facet points (nf, nqf)."""
    return np.einsum("fq,qi->fi", itg.ds[facets] * density, itg.facet_phi1)


def _cellwise(coeff, itg):
    c = np.asarray(coeff, float)
    if c.ndim == 0:
        return c
    if c.ndim == 1:
        return c[:, None]
    return c


def mass_matrix_p1(mesh, itg=None):
    from .spaces import Integrator

    itg = itg or Integrator(mesh)
    return assemble_matrix(p1_mass_local(itg), mesh.triangles, shape=(mesh.n_vertices,) * 2)


def stiffness_matrix_p1(mesh, coeff=None, itg=None):
    from .spaces import Integrator

    itg = itg or Integrator(mesh)
    return assemble_matrix(
        p1_stiffness_local(itg, coeff), mesh.triangles, shape=(mesh.n_vertices,) * 2
    )
