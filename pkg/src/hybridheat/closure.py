"""Unit-cell closure problems and effective coefficients.

All five problems are pure-Neumann periodic problems on the unit cell of
width 1 and height ``a``.  They are solved with a Lagrange multiplier for
the region-mean constraint and then shifted to an exact zero mean.

Volume sources are spread with the meshed region area so that the
discrete compatibility condition (total volume source equals total
boundary flux) holds to rounding; interface totals use the corrected
facet measures, which equal the analytic perimeters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import assemble_boundary_load, assemble_diffusion, assemble_load, assemble_mass, build_dofmap
from .geometry import UnitCellGeom
from .kernels import p1_geometry
from .mesh import PC, PW, TriMesh

MODEL_VERSION = 1
COMPAT_TOL = 1e-8


class ClosureError(RuntimeError):
    pass


@dataclass
class ClosureField:
    """Solution of one closure problem (scalar, or two components)."""

    name: str
    region: str
    values: np.ndarray  # (n_vertices,) or (n_vertices, 2); NaN off-region
    compatibility: float  # relative discrete compatibility residual
    mean: np.ndarray


@dataclass
class ClosureSolutions:
    chi_p1: ClosureField
    chi_p2: ClosureField
    chi_p3: ClosureField
    chi_c1: ClosureField
    chi_c2: ClosureField

    def items(self):
        return [
            ("p1", self.chi_p1),
            ("p2", self.chi_p2),
            ("p3", self.chi_p3),
            ("c1", self.chi_c1),
            ("c2", self.chi_c2),
        ]


def _region_of(problem):
    return "packing" if problem.startswith("p") else "cell"


def _solve_constrained(K, b, c):
    """Solve ``[K c; c^T 0] [x; lam] = [b; 0]``."""
    n = K.shape[0]
    A = sp.bmat([[K, sp.csr_matrix(c.reshape(-1, 1))], [sp.csr_matrix(c.reshape(1, -1)), None]], format="csc")
    rhs = np.concatenate([b, [0.0]])
    sol = spla.splu(A).solve(rhs)
    return sol[:n], sol[n]


def solve_closure(mesh: TriMesh, problem: str, groups, geom: UnitCellGeom) -> ClosureField:
    """Solve closure problem ``p1``, ``p2``, ``p3``, ``c1`` or ``c2``."""
    if problem not in ("p1", "p2", "p3", "c1", "c2"):
        raise ValueError(f"unknown closure problem {problem!r}")
    if "x" not in mesh.periodic.pairs or "y" not in mesh.periodic.pairs:
        raise ClosureError("unit-cell mesh lacks periodic pairing")
    region = _region_of(problem)
    k = groups.k_p if region == "packing" else groups.k_c
    dm = build_dofmap(mesh, {"u": region}, periodic_axes=("x", "y"))
    Z = dm.Z["u"]
    ZT = Z.T.tocsr()
    K = (ZT @ assemble_diffusion(mesh, region, k) @ Z).tocsr()
    mass_row = ZT @ (assemble_mass(mesh, region) @ np.ones(mesh.n_vertices))
    B_mesh = mesh.region_area(region)

    def scalar_rhs(flux_tag, flux_value):
        # weak form: int k grad(chi) . grad(v) = -int_G flux v + (total flux / |B|) int v
        b_bnd = assemble_boundary_load(mesh, flux_tag, flux_value)
        total = float(b_bnd.sum())
        b_vol = assemble_load(mesh, region, total / B_mesh) if B_mesh > 0 else np.zeros(mesh.n_vertices)
        return (ZT @ (b_vol - b_bnd), float(np.abs(b_vol).sum() + np.abs(b_bnd).sum())), total

    if problem == "p1":
        rhs, total = scalar_rhs(PW, groups.Q)
        rhs_list = [rhs]
    elif problem == "p2":
        rhs, total = scalar_rhs(PC, groups.Bi_p)
        rhs_list = [rhs]
    elif problem == "c1":
        # flux -k n.grad(chi) = -Bi_c on the interface, volume source +Bi_c |G| / |B_c|
        rhs, total = scalar_rhs(PC, -groups.Bi_c)
        rhs_list = [rhs]
    else:
        tris = mesh.triangles[mesh.region_mask(region)]
        area, grad = p1_geometry(mesh.vertices, np.ascontiguousarray(tris))
        rhs_list = []
        for j in range(2):
            b = np.zeros(mesh.n_vertices)
            for i in range(3):
                np.add.at(b, tris[:, i], -k * area * grad[:, i, j])
            # scale before periodic merging: the merged load may cancel to rounding
            rhs_list.append((ZT @ b, float(np.abs(b).sum())))

    vals, means, compat = [], [], 0.0
    for rhs, scale in rhs_list:
        compat = max(compat, abs(float(rhs.sum())) / scale if scale > 0 else 0.0)
        if float(np.abs(rhs).sum()) <= 1e-14 * scale or scale == 0:
            x = np.zeros(K.shape[0])
        else:
            x, _ = _solve_constrained(K, rhs, mass_row)
        mean = float(mass_row @ x) / B_mesh if B_mesh > 0 else 0.0
        x = x - mean
        vals.append(Z @ x)
        means.append(float(mass_row @ x) / B_mesh if B_mesh > 0 else 0.0)
    if compat > COMPAT_TOL:
        raise ClosureError(f"closure {problem}: compatibility residual {compat:.3e}")
    off = Z.getnnz(axis=1) == 0
    values = np.column_stack(vals) if len(vals) > 1 else vals[0]
    values = np.array(values, dtype=float)
    values[off] = np.nan
    return ClosureField(name=problem, region=region, values=values, compatibility=compat, mean=np.array(means))


def solve_all(mesh: TriMesh, groups, geom: UnitCellGeom) -> ClosureSolutions:
    return ClosureSolutions(*(solve_closure(mesh, p, groups, geom) for p in ("p1", "p2", "p3", "c1", "c2")))


def _grad_mean(mesh: TriMesh, field: ClosureField, area_Y: float):
    """``<grad chi>_Y``; returns (2,) for scalars or (2, 2) with [i, j] = d chi_j / d xi_i."""
    m = mesh.region_mask(field.region)
    tris = mesh.triangles[m]
    area, grad = p1_geometry(mesh.vertices, np.ascontiguousarray(tris))
    v = field.values
    if v.ndim == 1:
        g = np.einsum("kia,ki->ka", grad, v[tris])
        return (area[:, None] * g).sum(0) / area_Y
    out = np.zeros((2, 2))
    for j in range(2):
        g = np.einsum("kia,ki->ka", grad, v[tris, j])
        out[:, j] = (area[:, None] * g).sum(0) / area_Y
    return out


def _interface_mean(mesh: TriMesh, field: ClosureField, length: float):
    """``<chi>_{Gamma_pc}`` using weighted facet quadrature and the analytic length."""
    if length == 0:
        return np.zeros(2) if field.values.ndim == 2 else 0.0
    m = mesh.facet_tag == PC
    f = mesh.facets[m]
    L = mesh.facet_lengths()[m] * mesh.facet_weight[m]
    v = field.values
    if v.ndim == 1:
        return float((0.5 * (v[f[:, 0]] + v[f[:, 1]]) * L).sum() / length)
    return (0.5 * (v[f[:, 0]] + v[f[:, 1]]) * L[:, None]).sum(0) / length


@dataclass
class EffectiveModel:
    U_p: np.ndarray
    V_p: np.ndarray
    U_c: np.ndarray
    V_c: np.ndarray
    K_p: np.ndarray
    K_c: np.ndarray
    R1_p: float
    R2_p: float
    R3_p: float
    R4_p: np.ndarray
    R1_c: float
    R2_c: float
    R3_c: float
    R4_c: float  # uses the homogeneous heat-generation number R_low
    phi_p: float
    phi_c: float
    epsilon: float
    varrho: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def R4_c_at(self, R):
        """Source rate for a local heat-generation number ``R`` instead of ``R_low``."""
        return self.phi_c**2 * self.varrho * np.asarray(R, float)

    def to_dict(self):
        d = {}
        for k, v in asdict(self).items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        d["version"] = MODEL_VERSION
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        ver = d.pop("version", None)
        if ver != MODEL_VERSION:
            raise ValueError(f"unsupported model file version {ver}")
        for k in ("U_p", "V_p", "U_c", "V_c", "K_p", "K_c", "R4_p"):
            d[k] = np.asarray(d[k], float)
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def check_invariants(self, k_p: float = 1.0, tol: float = 1e-10) -> dict:
        """Identity and bound checks; returns name -> (ok, value)."""
        out = {}
        out["R2_p_identity"] = abs(self.R2_p - self.phi_p / self.phi_c * self.R1_p) <= 1e-12 * max(1, abs(self.R2_p)) if self.phi_c > 0 else True
        out["R1_c_identity"] = abs(self.R1_c - self.phi_c / self.phi_p * self.R2_c) <= 1e-12 * max(1, abs(self.R1_c))
        out["K_p_symmetric"] = float(np.abs(self.K_p - self.K_p.T).max()) <= tol
        out["K_c_symmetric"] = float(np.abs(self.K_c - self.K_c.T).max()) <= tol
        d = np.diag(self.K_p)
        out["K_p_diag_bounds"] = bool(np.all(d > 0) and np.all(d <= self.phi_p * k_p * (1 + 1e-12)))
        return out


def effective_coefficients(
    closures: ClosureSolutions, mesh: TriMesh, geom: UnitCellGeom, groups, epsilon: float
) -> EffectiveModel:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    fr = geom.fractions
    phi_p, phi_c = fr.phi_p, fr.phi_c
    Bp, Bc, Gpc, Gpw, Y = fr.area_Bp, fr.area_Bc, fr.len_pc, fr.len_pw, fr.area_Y
    g = groups
    rs = g.varrho * g.varsigma

    gp1 = _grad_mean(mesh, closures.chi_p1, Y)
    gp2 = _grad_mean(mesh, closures.chi_p2, Y)
    gp3 = _grad_mean(mesh, closures.chi_p3, Y)
    gc1 = _grad_mean(mesh, closures.chi_c1, Y)
    gc2 = _grad_mean(mesh, closures.chi_c2, Y)
    sp1 = _interface_mean(mesh, closures.chi_p1, Gpc)
    sp2 = _interface_mean(mesh, closures.chi_p2, Gpc)
    sp3 = _interface_mean(mesh, closures.chi_p3, Gpc)
    sc1 = _interface_mean(mesh, closures.chi_c1, Gpc)
    sc2 = _interface_mean(mesh, closures.chi_c2, Gpc)

    exch_p = phi_p * g.Bi_p / Bp * Gpc if Bp > 0 else 0.0
    exch_c = phi_c * g.Bi_c / Bc * Gpc if Bc > 0 else 0.0
    bracket = 1.0 / epsilon - sc1 + sp2

    U_p = exch_p * np.asarray(sp3) - g.k_p * gp2
    V_p = (phi_p / phi_c) * (exch_p * np.asarray(sc2) - g.k_p * gp2) if phi_c > 0 else np.zeros(2)
    K_p = g.k_p * (phi_p * np.eye(2) + gp3)
    R1_p = exch_p * bracket if Gpc > 0 else 0.0
    R2_p = (phi_p / phi_c) * R1_p if phi_c > 0 else 0.0
    R3_p = phi_p**2 * ((g.Q * Gpw / (Bp * epsilon) if Bp > 0 else 0.0) + (g.Bi_p / Bp * Gpc * sp1 if Bp > 0 else 0.0))
    R4_p = phi_p * g.k_p * gp1

    U_c = rs * (exch_c * np.asarray(sc2) + g.k_c * gc1) if phi_c > 0 else np.zeros(2)
    V_c = (phi_c / phi_p) * rs * (exch_c * np.asarray(sp3) + g.k_c * gc1) if phi_c > 0 else np.zeros(2)
    K_c = rs * g.k_c * (phi_c * np.eye(2) + gc2)
    R2_c = phi_c * g.Bi_c * rs / Bc * Gpc * bracket if (Bc > 0 and Gpc > 0) else 0.0
    R1_c = (phi_c / phi_p) * R2_c
    R3_c = phi_c**2 * g.Bi_c * rs / Bc * Gpc * sp1 if (Bc > 0 and Gpc > 0) else 0.0
    R4_c = phi_c**2 * g.varrho * g.R_low

    diag = {
        "compatibility": {n: f.compatibility for n, f in closures.items()},
        "zero_mean": {n: float(np.abs(f.mean).max()) for n, f in closures.items()},
        "interface_means": {
            "chi_p1": float(sp1),
            "chi_p2": float(sp2),
            "chi_p3": np.asarray(sp3).tolist(),
            "chi_c1": float(sc1),
            "chi_c2": np.asarray(sc2).tolist(),
        },
    }
    return EffectiveModel(
        U_p=np.asarray(U_p, float),
        V_p=np.asarray(V_p, float),
        U_c=np.asarray(U_c, float),
        V_c=np.asarray(V_c, float),
        K_p=np.asarray(K_p, float),
        K_c=np.asarray(K_c, float),
        R1_p=float(R1_p),
        R2_p=float(R2_p),
        R3_p=float(R3_p),
        R4_p=np.asarray(R4_p, float),
        R1_c=float(R1_c),
        R2_c=float(R2_c),
        R3_c=float(R3_c),
        R4_c=float(R4_c),
        phi_p=phi_p,
        phi_c=phi_c,
        epsilon=float(epsilon),
        varrho=g.varrho,
        diagnostics=diag,
    )


def build_effective_model(geom: UnitCellGeom, groups, epsilon: float, h: float | None = None, n_seg: int = 64):
    """Mesh the unit cell, solve all closures and evaluate the coefficients."""
    from .mesh import mesh_unit_cell

    mesh = mesh_unit_cell(geom, h if h is not None else 1.0 / 30.0, n_seg)
    closures = solve_all(mesh, groups, geom)
    return effective_coefficients(closures, mesh, geom, groups, epsilon), closures, mesh
