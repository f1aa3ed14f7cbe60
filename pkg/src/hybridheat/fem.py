"""P1 finite-element assembly and sparse solves.

Matrices are assembled on the mesh's vertex numbering and then mapped to
unknowns through a :class:`DofMap`.  Sparse storage is SciPy CSR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kernels import p1_geometry
from .mesh import TriMesh, facet_code, region_code

# interior 3-point rule on the reference triangle, barycentric coordinates
QUAD3_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
QUAD3_WEIGHT = np.array([1 / 3, 1 / 3, 1 / 3])


class SolverError(RuntimeError):
    """Linear or nonlinear solve failure; carries the final residual."""

    def __init__(self, msg, residual=None, history=None):
        super().__init__(msg)
        self.residual = residual
        self.history = history or []


def _select(mesh: TriMesh, region):
    if region is not None:
        region_code(region)
    return mesh.region_mask(region)


def _coeff_per_tri(coeff, n):
    c = np.asarray(coeff, dtype=float)
    if c.ndim == 0:
        return np.broadcast_to(c, (n,)), False
    if c.shape == (2, 2):
        return np.broadcast_to(c, (n, 2, 2)), True
    if c.shape == (n,):
        return c, False
    if c.shape == (n, 2, 2):
        return c, True
    raise ValueError(f"coefficient shape {c.shape} not understood for {n} triangles")


def _scatter(tris, local, n):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_diffusion(mesh: TriMesh, region, coeff=1.0) -> sp.csr_matrix:
    """Stiffness matrix ``int coeff grad(u) . grad(v)`` over one region.

    ``coeff`` is a scalar, a 2x2 tensor, or per-triangle values of either,
    where per-triangle arrays are indexed over the selected triangles.
    """
    m = _select(mesh, region)
    tris = mesh.triangles[m]
    n = mesh.n_vertices
    if len(tris) == 0:
        return sp.csr_matrix((n, n))
    area, grad = p1_geometry(mesh.vertices, np.ascontiguousarray(tris))
    c, tensor = _coeff_per_tri(coeff, len(tris))
    if tensor:
        kg = np.einsum("kab,kjb->kja", c, grad)
        local = np.einsum("kia,kja->kij", grad, kg)
    else:
        local = np.einsum("kia,kja->kij", grad, grad) * c[:, None, None]
    local *= area[:, None, None]
    return _scatter(tris, local, n)


_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh: TriMesh, region, coeff=1.0) -> sp.csr_matrix:
    """Consistent P1 mass matrix with piecewise-constant ``coeff``."""
    m = _select(mesh, region)
    tris = mesh.triangles[m]
    n = mesh.n_vertices
    if len(tris) == 0:
        return sp.csr_matrix((n, n))
    area = np.abs(mesh.areas()[m])
    c, tensor = _coeff_per_tri(coeff, len(tris))
    if tensor:
        raise ValueError("mass coefficient must be scalar")
    local = (area * c)[:, None, None] * _MASS_REF[None]
    return _scatter(tris, local, n)


def assemble_advection(mesh: TriMesh, region, velocity) -> sp.csr_matrix:
    """Matrix of ``int (U . grad u) v`` (row = test function)."""
    m = _select(mesh, region)
    tris = mesh.triangles[m]
    n = mesh.n_vertices
    if len(tris) == 0:
        return sp.csr_matrix((n, n))
    area, grad = p1_geometry(mesh.vertices, np.ascontiguousarray(tris))
    U = np.broadcast_to(np.asarray(velocity, float), (len(tris), 2))
    ug = np.einsum("ka,kja->kj", U, grad)  # U . grad phi_j
    local = (np.abs(area) / 3.0)[:, None, None] * np.broadcast_to(ug[:, None, :], (len(tris), 3, 3))
    return _scatter(tris, local, n)


def _facets(mesh: TriMesh, tag, corrected=True):
    fm = mesh.facet_mask(facet_code(tag))
    f = mesh.facets[fm]
    L = mesh.facet_lengths()[fm]
    if corrected:
        L = L * mesh.facet_weight[fm]
    return f, L, fm


def assemble_boundary_mass(mesh: TriMesh, facet_tag, coeff=1.0, corrected=True) -> sp.csr_matrix:
    """1D P1 mass on tagged facets, lengths scaled by the measure weights."""
    f, L, _ = _facets(mesh, facet_tag, corrected)
    n = mesh.n_vertices
    c = np.broadcast_to(np.asarray(coeff, float), (len(f),))
    loc = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    vals = (L * c)[:, None, None] * loc[None]
    rows = np.repeat(f, 2, axis=1).ravel()
    cols = np.tile(f, (1, 2)).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))


def assemble_boundary_load(mesh: TriMesh, facet_tag, g=1.0, corrected=True) -> np.ndarray:
    """Load ``int g v`` on tagged facets.

    ``g`` may be a scalar, an array of per-facet constants (over the tagged
    facets), or a callable of the facet midpoints returning per-facet values.
    """
    f, L, _ = _facets(mesh, facet_tag, corrected)
    if callable(g):
        mid = mesh.vertices[f].mean(axis=1)
        gv = np.asarray(g(mid), float)
    else:
        gv = np.broadcast_to(np.asarray(g, float), (len(f),))
    b = np.zeros(mesh.n_vertices)
    np.add.at(b, f[:, 0], 0.5 * L * gv)
    np.add.at(b, f[:, 1], 0.5 * L * gv)
    return b


def assemble_load(mesh: TriMesh, region, f=1.0) -> np.ndarray:
    """Volume load ``int f v`` with piecewise-constant ``f`` (scalar or per triangle)."""
    m = _select(mesh, region)
    tris = mesh.triangles[m]
    area = np.abs(mesh.areas()[m])
    fv = np.broadcast_to(np.asarray(f, float), (len(tris),))
    b = np.zeros(mesh.n_vertices)
    for i in range(3):
        np.add.at(b, tris[:, i], area * fv / 3.0)
    return b


def quadrature_operator(mesh: TriMesh, region):
    """Sparse interpolation to 3-point quadrature nodes of a region.

    Returns ``(Q, points, weights)`` where ``Q @ u`` gives values at the
    points (ordered triangle-major) and ``weights`` already include areas.
    """
    m = _select(mesh, region)
    tris = mesh.triangles[m]
    nt = len(tris)
    area = np.abs(mesh.areas()[m])
    rows = np.repeat(np.arange(3 * nt), 3)
    cols = np.repeat(tris, 3, axis=0).ravel()
    vals = np.tile(QUAD3_BARY, (nt, 1)).ravel()
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(3 * nt, mesh.n_vertices))
    P = mesh.vertices[tris]
    points = np.einsum("qi,kia->kqa", QUAD3_BARY, P).reshape(-1, 2)
    weights = (area[:, None] * QUAD3_WEIGHT[None]).ravel()
    return Q, points, weights


@dataclass
class DofMap:
    """Vertex-to-unknown maps for one or more region-restricted fields.

    ``Z[name]`` is an ``(n_vertices, n_dofs)`` 0/1 matrix scattering the
    global unknown vector to nodal values of field ``name`` (rows of
    vertices outside the field's region are empty).  Periodic partners
    share one unknown.
    """

    fields: tuple
    Z: dict
    n_dofs: int
    offsets: dict
    sizes: dict

    def field_values(self, name, x):
        """Nodal values of ``name`` on the vertex numbering (NaN off-region)."""
        v = self.Z[name] @ x
        v[self.Z[name].getnnz(axis=1) == 0] = np.nan
        return v

    def project(self, name, nodal):
        """Global vector slice whose field ``name`` equals ``nodal`` where defined."""
        Zf = self.Z[name].tocsc()
        x = np.zeros(self.n_dofs)
        cols = Zf.indices
        # each unknown column has one or more rows; take the first (periodic copies agree)
        starts = Zf.indptr[:-1]
        has = Zf.indptr[1:] > starts
        x[np.where(has)[0]] = nodal[cols[starts[has]]]
        return x


def build_dofmap(mesh: TriMesh, fields: dict, periodic_axes=("y",)) -> DofMap:
    """``fields`` maps field name to region (``None`` for all triangles)."""
    master = mesh.periodic.master_of(mesh.n_vertices, axes=periodic_axes)
    Z, offsets, sizes = {}, {}, {}
    off = 0
    for name, region in fields.items():
        verts = np.unique(mesh.triangles[mesh.region_mask(region)])
        reps = master[verts]
        uniq, local = np.unique(reps, return_inverse=True)
        Z[name] = (verts, off + local.ravel())
        offsets[name] = off
        sizes[name] = len(uniq)
        off += len(uniq)
    for name, (rows, cols) in Z.items():
        Z[name] = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_vertices, off))
    return DofMap(fields=tuple(fields), Z=Z, n_dofs=off, offsets=offsets, sizes=sizes)


def solve_linear(A, b, method: str = "direct", tol: float = 1e-10, maxiter: int = 2000):
    """Solve ``A x = b``; the relative residual must not exceed ``tol``.

    ``direct`` uses SuperLU (handles non-symmetric systems); ``iterative``
    uses GMRES preconditioned by an incomplete LU.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros_like(b)
    if method == "direct":
        try:
            x = spla.splu(A.tocsc()).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}") from exc
    elif method == "iterative":
        try:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, ilu.solve)
        except RuntimeError:
            M = None
        x, info = spla.gmres(A, b, M=M, rtol=tol * 0.1, atol=0.0, restart=100, maxiter=maxiter)
        if info != 0:
            r = np.linalg.norm(A @ x - b) / nb
            raise SolverError(f"GMRES did not converge (info={info})", residual=r)
    else:
        raise ValueError(f"unknown method {method!r}")
    r = np.linalg.norm(A @ x - b) / nb
    if not np.isfinite(r) or r > tol:
        raise SolverError(f"relative residual {r:.3e} exceeds {tol:.1e}", residual=r)
    return x


class Factorized:
    """Reusable LU of a fixed matrix."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        try:
            self._lu = spla.splu(self.A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve(self, b):
        return self._lu.solve(np.asarray(b, float))

    @property
    def shape(self):
        return self.A.shape
