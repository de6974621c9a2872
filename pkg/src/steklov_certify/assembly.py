"""Finite element spaces and matrix assembly.

Three spaces live on a mesh: the conforming P1 space (one dof per vertex),
the broken P1 space (three dofs per triangle, no continuity), and a
first-order Raviart-Thomas flux space used for equilibration.  The trace
space on the boundary is edgewise linear and discontinuous, two dofs per
boundary edge in loop order (slot 2j = value at the loop-start vertex of
edge j, slot 2j+1 = value at its loop-end vertex).

Raviart-Thomas dofs are, per edge, the two endpoint values of the normal
trace (normal oriented by the global min -> max vertex convention) and,
per triangle, the two componentwise mean values of the field.  Interior
dofs (edge dofs of interior edges plus all triangle dofs) are numbered
first, boundary edge dofs last in boundary-loop order, so the normal trace
on the boundary is a signed permutation of the trace-space slots.

All assembled integrands are polynomials of degree at most four; the
six-point triangle rule below is exact for them.  Element matrices are
symmetrized before scattering, so assembled matrices are exactly
symmetric.  Everything here is pure: meshes and systems can be shared
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh

__all__ = [
    "AssembledSystem",
    "BoundaryField",
    "BoundaryOperators",
    "DofMaps",
    "RTElements",
    "TRIANGLE_RULE",
    "assemble_boundary",
    "assemble_p1",
    "assemble_system",
    "boundary_normals",
    "build_dof_maps",
    "edge_gauss_rule",
    "p1_gradients",
    "project_boundary",
    "rt_divergence_vertex_values",
    "rt_values_at_quadrature",
]

# Six-point symmetric rule, exact for degree 4.  Weights sum to one;
# integrals are area * sum(w * f(points)).
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
TRIANGLE_RULE = (
    np.array(
        [
            [1 - 2 * _A1, _A1, _A1],
            [_A1, 1 - 2 * _A1, _A1],
            [_A1, _A1, 1 - 2 * _A1],
            [1 - 2 * _A2, _A2, _A2],
            [_A2, 1 - 2 * _A2, _A2],
            [_A2, _A2, 1 - 2 * _A2],
        ]
    ),
    np.array([_W1, _W1, _W1, _W2, _W2, _W2]),
)

_P1_MASS_BLOCK = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS_BLOCK = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


def edge_gauss_rule(n):
    """Gauss-Legendre nodes/weights on [0, 1]; exact for degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def p1_gradients(mesh):
    """Gradients of the three vertex hat functions per triangle, (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    areas = mesh.triangle_areas()
    # grad of hat i is perpendicular to the opposite edge, scaled by 1/(2A)
    b = np.stack(
        [p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1
    )
    c = np.stack(
        [p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1
    )
    return np.stack([b, c], axis=2) / (2.0 * areas)[:, None, None]


def scatter_csr(rows, cols, data, shape):
    mat = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
    return mat.tocsr()


def assemble_p1(mesh):
    """Stiffness and mass matrices of the conforming P1 space, (n, n) csr."""
    n = mesh.num_vertices
    tris = mesh.triangles
    areas = mesh.triangle_areas()
    grads = p1_gradients(mesh)
    s_loc = np.einsum("tie,tje->tij", grads, grads) * areas[:, None, None]
    s_loc = 0.5 * (s_loc + np.transpose(s_loc, (0, 2, 1)))
    m_loc = _P1_MASS_BLOCK[None, :, :] * areas[:, None, None]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    stiffness = scatter_csr([rows], [cols], [s_loc.ravel()], (n, n))
    mass = scatter_csr([rows], [cols], [m_loc.ravel()], (n, n))
    return stiffness, mass


def boundary_normals(mesh):
    """Outward unit normals of the boundary edges, in loop order."""
    d = mesh.vertices[mesh.boundary_edges[:, 1]] - mesh.vertices[mesh.boundary_edges[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    return np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]


@dataclass(frozen=True)
class BoundaryOperators:
    """Boundary forms of the conforming space against the trace space.

    boundary_coupling : (n, s) products of vertex hats with trace slots.
    boundary_mass : (s, s) Gram matrix of the trace space (2x2 blocks).
    vertex_boundary_mass : (n, n) csr, the boundary form on the conforming
        space itself.
    trace_map : (s, s) signed permutation sending trace-slot coefficients
        to boundary Raviart-Thomas dofs (normal-trace endpoint values).
    """

    boundary_coupling: np.ndarray
    boundary_mass: np.ndarray
    vertex_boundary_mass: sp.csr_matrix
    trace_map: np.ndarray


def assemble_boundary(mesh):
    n = mesh.num_vertices
    nb = mesh.num_boundary_edges
    s = 2 * nb
    lengths = mesh.boundary_edge_lengths()

    coupling = np.zeros((n, s))
    gram = np.zeros((s, s))
    trace_map = np.zeros((s, s))
    rows, cols, data = [], [], []
    for j in range(nb):
        a, b = map(int, mesh.boundary_edges[j])
        ell = lengths[j]
        block = ell * _EDGE_MASS_BLOCK
        gram[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = block
        coupling[np.ix_((a, b), (2 * j, 2 * j + 1))] += block
        rows.append(np.array([a, a, b, b]))
        cols.append(np.array([a, b, a, b]))
        data.append(ell * np.array([1 / 3, 1 / 6, 1 / 6, 1 / 3]))
        if a < b:
            trace_map[2 * j, 2 * j] = 1.0
            trace_map[2 * j + 1, 2 * j + 1] = 1.0
        else:
            # loop runs against the global edge orientation: the min-vertex
            # dof reads the slot of b and the normal flips sign
            trace_map[2 * j, 2 * j + 1] = -1.0
            trace_map[2 * j + 1, 2 * j] = -1.0
    vertex_boundary_mass = scatter_csr(rows, cols, data, (n, n))
    return BoundaryOperators(coupling, gram, vertex_boundary_mass, trace_map)


@dataclass(frozen=True)
class DofMaps:
    """Dimensions and index tables of all spaces on one mesh.

    dim_p1 + 1 counts nothing special; the invariants are
    dim_rt_interior + dim_rt_boundary = 2*len(edges) + 2*num_triangles and
    dim_rt_boundary = dim_trace.
    """

    dim_p1: int
    dim_broken: int
    dim_trace: int
    dim_rt_interior: int
    dim_rt_boundary: int
    rt_interior: np.ndarray
    rt_boundary: np.ndarray
    boundary_vertices: np.ndarray
    edges: np.ndarray
    edge_is_boundary: np.ndarray
    boundary_edge_index: np.ndarray
    rt_edge_dofs: np.ndarray
    rt_tri_dofs: np.ndarray


def build_dof_maps(mesh):
    nt = mesh.num_triangles
    nb = mesh.num_boundary_edges
    tris = mesh.triangles
    pairs = np.sort(
        np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0), axis=1
    )
    edges = np.unique(pairs, axis=0)
    index = {(int(a), int(b)): e for e, (a, b) in enumerate(edges)}

    edge_is_boundary = np.zeros(len(edges), dtype=bool)
    boundary_edge_index = np.empty(nb, dtype=np.int64)
    for j, (a, b) in enumerate(mesh.boundary_edges):
        e = index[(min(int(a), int(b)), max(int(a), int(b)))]
        edge_is_boundary[e] = True
        boundary_edge_index[j] = e

    n_interior_edges = int((~edge_is_boundary).sum())
    p_int = 2 * n_interior_edges + 2 * nt
    p_bnd = 2 * nb

    rt_edge_dofs = np.empty((len(edges), 2), dtype=np.int64)
    rank = np.cumsum(~edge_is_boundary) - 1
    for e in range(len(edges)):
        if not edge_is_boundary[e]:
            rt_edge_dofs[e] = (2 * rank[e], 2 * rank[e] + 1)
    for j, e in enumerate(boundary_edge_index):
        rt_edge_dofs[e] = (p_int + 2 * j, p_int + 2 * j + 1)
    rt_tri_dofs = 2 * n_interior_edges + np.column_stack(
        [2 * np.arange(nt), 2 * np.arange(nt) + 1]
    )

    return DofMaps(
        dim_p1=mesh.num_vertices,
        dim_broken=3 * nt,
        dim_trace=2 * nb,
        dim_rt_interior=p_int,
        dim_rt_boundary=p_bnd,
        rt_interior=np.arange(p_int),
        rt_boundary=np.arange(p_int, p_int + p_bnd),
        boundary_vertices=mesh.boundary_vertices.copy(),
        edges=edges,
        edge_is_boundary=edge_is_boundary,
        boundary_edge_index=boundary_edge_index,
        rt_edge_dofs=rt_edge_dofs,
        rt_tri_dofs=rt_tri_dofs,
    )


@dataclass(frozen=True)
class RTElements:
    """Per-element flux basis data for pointwise evaluation.

    The basis on element t is psi_d = sum_mu coeffs[t, mu, d] * m_mu where
    m_mu are the eight monomial fields (1,0), (xi,0), (eta,0), (0,1),
    (0,xi), (0,eta), (xi^2, xi*eta), (xi*eta, eta^2) in the local frame
    xi = (x - centroid[t]) / scale[t].
    """

    gdofs: np.ndarray
    coeffs: np.ndarray
    centroids: np.ndarray
    scales: np.ndarray
    areas: np.ndarray


def _monomial_values(pts):
    """Monomial flux fields at local points, (q, 8, 2)."""
    xi, eta = pts[:, 0], pts[:, 1]
    q = len(pts)
    vals = np.zeros((q, 8, 2))
    vals[:, 0, 0] = 1.0
    vals[:, 1, 0] = xi
    vals[:, 2, 0] = eta
    vals[:, 3, 1] = 1.0
    vals[:, 4, 1] = xi
    vals[:, 5, 1] = eta
    vals[:, 6, 0] = xi * xi
    vals[:, 6, 1] = xi * eta
    vals[:, 7, 0] = xi * eta
    vals[:, 7, 1] = eta * eta
    return vals


def _monomial_divergences(pts, scale):
    """Physical divergence of the monomial fields at local points, (q, 8)."""
    xi, eta = pts[:, 0], pts[:, 1]
    div = np.zeros((len(pts), 8))
    div[:, 1] = 1.0 / scale
    div[:, 5] = 1.0 / scale
    div[:, 6] = 3.0 * xi / scale
    div[:, 7] = 3.0 * eta / scale
    return div


def assemble_rt1(mesh, dofs):
    """Flux mass matrix, divergence coupling and element data.

    Returns (rt_mass, div_coupling, elements) with rt_mass of size
    (p, p), p = dim_rt_interior + dim_rt_boundary, and div_coupling of
    size (dim_broken, p) holding products of broken hats with divergences.
    """
    bary, wq = TRIANGLE_RULE
    nt = mesh.num_triangles
    p_total = dofs.dim_rt_interior + dofs.dim_rt_boundary
    m_total = dofs.dim_broken

    edge_vec = mesh.vertices[dofs.edges[:, 1]] - mesh.vertices[dofs.edges[:, 0]]
    edge_len = np.hypot(edge_vec[:, 0], edge_vec[:, 1])
    edge_normal = np.column_stack([edge_vec[:, 1], -edge_vec[:, 0]]) / edge_len[:, None]

    edge_index = {(int(a), int(b)): e for e, (a, b) in enumerate(dofs.edges)}
    areas = mesh.triangle_areas()

    gdofs_all = np.empty((nt, 8), dtype=np.int64)
    coeffs_all = np.empty((nt, 8, 8))
    centroids = np.empty((nt, 2))
    scales = np.empty(nt)

    q_rows, q_cols, q_data = [], [], []
    n_rows, n_cols, n_data = [], [], []
    local_rows = np.repeat(np.arange(3), 8)

    for t in range(nt):
        tri = mesh.triangles[t]
        p = mesh.vertices[tri]
        centroid = p.mean(axis=0)
        scale = float(np.hypot(*(np.roll(p, -1, axis=0) - p).T).max())
        xi = (p - centroid) / scale

        v = np.empty((8, 8))
        gdofs = np.empty(8, dtype=np.int64)
        for l in range(3):
            a, b = int(tri[l]), int(tri[(l + 1) % 3])
            key = (min(a, b), max(a, b))
            e = edge_index[key]
            normal = edge_normal[e]
            lo = l if a < b else (l + 1) % 3
            hi = (l + 1) % 3 if a < b else l
            v[2 * l] = _monomial_values(xi[lo : lo + 1])[0] @ normal
            v[2 * l + 1] = _monomial_values(xi[hi : hi + 1])[0] @ normal
            gdofs[2 * l : 2 * l + 2] = dofs.rt_edge_dofs[e]
        pts = bary @ xi
        mvals = _monomial_values(pts)
        v[6] = wq @ mvals[:, :, 0]
        v[7] = wq @ mvals[:, :, 1]
        gdofs[6:8] = dofs.rt_tri_dofs[t]

        c = np.linalg.inv(v)
        mass_mono = areas[t] * np.einsum("q,qmd,qnd->mn", wq, mvals, mvals)
        mass_elem = c.T @ mass_mono @ c
        mass_elem = 0.5 * (mass_elem + mass_elem.T)

        div_mono = _monomial_divergences(pts, scale)
        div_elem = (areas[t] * np.einsum("q,qi,qm->im", wq, bary, div_mono)) @ c

        q_rows.append(np.repeat(gdofs, 8))
        q_cols.append(np.tile(gdofs, 8))
        q_data.append(mass_elem.ravel())
        n_rows.append(3 * t + local_rows)
        n_cols.append(np.tile(gdofs, 3))
        n_data.append(div_elem.ravel())

        gdofs_all[t] = gdofs
        coeffs_all[t] = c
        centroids[t] = centroid
        scales[t] = scale

    rt_mass = scatter_csr(q_rows, q_cols, q_data, (p_total, p_total))
    div_coupling = scatter_csr(n_rows, n_cols, n_data, (m_total, p_total))
    elements = RTElements(gdofs_all, coeffs_all, centroids, scales, areas.copy())
    return rt_mass, div_coupling, elements


def assemble_broken(mesh):
    """Broken P1 mass, coupling with the conforming space, and moments."""
    nt = mesh.num_triangles
    n = mesh.num_vertices
    m = 3 * nt
    areas = mesh.triangle_areas()
    blocks = _P1_MASS_BLOCK[None, :, :] * areas[:, None, None]
    broken_ids = (3 * np.arange(nt))[:, None] + np.arange(3)[None, :]
    rows = np.repeat(broken_ids, 3, axis=1).ravel()
    cols_mass = np.tile(broken_ids, (1, 3)).ravel()
    cols_coupling = np.tile(mesh.triangles, (1, 3)).ravel()
    broken_mass = scatter_csr([rows], [cols_mass], [blocks.ravel()], (m, m))
    broken_coupling = scatter_csr([rows], [cols_coupling], [blocks.ravel()], (m, n))
    moments = np.repeat(areas / 3.0, 3)
    return broken_mass, broken_coupling, moments


@dataclass(frozen=True)
class AssembledSystem:
    """All matrices of one mesh, in a fixed deterministic dof order.

    Flux matrices are stored with interior dofs first and the boundary
    dofs (loop order) last; rt_mass_ii / rt_mass_ib / rt_mass_bb and
    div_interior / div_boundary are the corresponding blocks of rt_mass
    and div_coupling.
    """

    mesh: Mesh
    dofs: DofMaps
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    boundary_coupling: np.ndarray
    boundary_mass: np.ndarray
    vertex_boundary_mass: sp.csr_matrix
    trace_map: np.ndarray
    broken_mass: sp.csr_matrix
    broken_coupling: sp.csr_matrix
    broken_moments: np.ndarray
    rt_mass: sp.csr_matrix
    rt_mass_ii: sp.csr_matrix
    rt_mass_ib: sp.csr_matrix
    rt_mass_bb: sp.csr_matrix
    div_interior: sp.csr_matrix
    div_boundary: sp.csr_matrix
    rt_elements: RTElements

    def boundary_integral(self, g):
        """Integral of a trace-space function over the boundary."""
        return float(np.sum(self.boundary_mass @ np.asarray(g)))

    def boundary_norm(self, g):
        """L2 boundary norm of a trace-space function."""
        g = np.asarray(g)
        return float(np.sqrt(max(g @ (self.boundary_mass @ g), 0.0)))


def assemble_system(mesh):
    """Assemble every operator the certification pipeline needs."""
    dofs = build_dof_maps(mesh)
    stiffness, mass = assemble_p1(mesh)
    boundary = assemble_boundary(mesh)
    broken_mass, broken_coupling, moments = assemble_broken(mesh)
    rt_mass, div_coupling, elements = assemble_rt1(mesh, dofs)
    p_int = dofs.dim_rt_interior
    rt_csc = rt_mass.tocsc()
    div_csc = div_coupling.tocsc()
    return AssembledSystem(
        mesh=mesh,
        dofs=dofs,
        stiffness=stiffness,
        mass=mass,
        boundary_coupling=boundary.boundary_coupling,
        boundary_mass=boundary.boundary_mass,
        vertex_boundary_mass=boundary.vertex_boundary_mass,
        trace_map=boundary.trace_map,
        broken_mass=broken_mass,
        broken_coupling=broken_coupling,
        broken_moments=moments,
        rt_mass=rt_mass,
        rt_mass_ii=rt_csc[:, :p_int][:p_int].tocsr(),
        rt_mass_ib=rt_csc[:, p_int:][:p_int].tocsr(),
        rt_mass_bb=rt_csc[:, p_int:][p_int:].tocsr(),
        div_interior=div_csc[:, :p_int].tocsr(),
        div_boundary=div_csc[:, p_int:].tocsr(),
        rt_elements=elements,
    )


@dataclass(frozen=True)
class BoundaryField:
    """Coefficients of an edgewise-linear function on the boundary loop."""

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", arr)


def coefficients_of(data):
    """Accept a BoundaryField or a bare coefficient array."""
    return np.asarray(getattr(data, "coefficients", data), dtype=float)


def project_boundary(mesh, data, n_gauss=10):
    """L2-project boundary data onto the trace space, edge by edge.

    data is either a callable f(points, normal) -> values, evaluated with
    the outward unit normal of each edge, or an (nb, 2) array of endpoint
    values taken as the trace coefficients directly.  The projection is
    local: each edge solves its own 2x2 Gram system, so jumps at vertices
    are allowed.
    """
    nb = mesh.num_boundary_edges
    if not callable(data):
        values = np.asarray(data, dtype=float)
        if values.shape != (nb, 2):
            raise ValueError(f"expected ({nb}, 2) endpoint values, got {values.shape}")
        return BoundaryField(values.ravel())

    snodes, sweights = edge_gauss_rule(n_gauss)
    normals = boundary_normals(mesh)
    lengths = mesh.boundary_edge_lengths()
    g = np.empty(2 * nb)
    inv_block = np.array([[2.0, -1.0], [-1.0, 2.0]]) * 2.0
    for j in range(nb):
        a, b = mesh.boundary_edges[j]
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        pts = pa[None, :] + snodes[:, None] * (pb - pa)[None, :]
        vals = np.asarray(data(pts, normals[j]), dtype=float)
        if vals.shape != snodes.shape:
            raise ValueError("boundary data callable must return one value per point")
        rhs = np.array(
            [
                lengths[j] * np.sum(sweights * vals * (1.0 - snodes)),
                lengths[j] * np.sum(sweights * vals * snodes),
            ]
        )
        g[2 * j : 2 * j + 2] = inv_block @ rhs / lengths[j]
    if not np.all(np.isfinite(g)):
        raise ValueError("boundary data produced non-finite projection coefficients")
    return BoundaryField(g)


def rt_values_at_quadrature(system, x):
    """Flux field values at the triangle-rule points, (nt, q, 2)."""
    bary, _ = TRIANGLE_RULE
    el = system.rt_elements
    mesh = system.mesh
    x = np.asarray(x)
    nt = mesh.num_triangles
    out = np.empty((nt, len(bary), 2))
    for t in range(nt):
        local = el.coeffs[t] @ x[el.gdofs[t]]
        pts = bary @ ((mesh.vertices[mesh.triangles[t]] - el.centroids[t]) / el.scales[t])
        out[t] = np.einsum("qmd,m->qd", _monomial_values(pts), local)
    return out


def rt_divergence_vertex_values(system, x):
    """div of a flux field at each triangle's vertices, (nt, 3).

    The divergence is linear per element, so vertex values determine it.
    """
    el = system.rt_elements
    mesh = system.mesh
    x = np.asarray(x)
    nt = mesh.num_triangles
    out = np.empty((nt, 3))
    for t in range(nt):
        local = el.coeffs[t] @ x[el.gdofs[t]]
        xi = (mesh.vertices[mesh.triangles[t]] - el.centroids[t]) / el.scales[t]
        out[t] = (
            local[1] + local[5] + 3.0 * (local[6] * xi[:, 0] + local[7] * xi[:, 1])
        ) / el.scales[t]
    return out
