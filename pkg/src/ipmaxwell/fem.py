"""
Discrete spaces on a subdomain-tagged mesh.

``X_h`` holds vector fields that are continuous inside each subdomain and
discontinuous across subdomain interfaces; no boundary condition is built
in. ``M_h`` holds globally continuous scalars vanishing on the boundary.
Both use the nodal Lagrange basis of degree ``ell - 1``.

Vector dofs are ordered lexicographically by (subdomain, node, component),
so a node lying on an interface shared by ``k`` subdomains owns ``2k`` dofs.

Callables describing fields take ``(xy, sub)`` where ``xy`` is an (m, 2)
array of points and ``sub`` the (m,) subdomain ids they are seen from; this
is how one-sided values on interfaces are requested.
"""
from dataclasses import dataclass

import numpy as np

from .geometry import BOUNDARY
from .quadrature import line_rule, triangle_rule

SUPPORTED_ELL = (2, 3)

_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def reference_nodes(degree):
    """Nodal points on the reference triangle: vertices, then midpoints opposite vertex 0, 1, 2."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return verts
    mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    return np.vstack([verts, mids])


def reference_basis(degree, pts):
    """Values (nq, nloc) and reference gradients (nq, nloc, 2) of the Lagrange basis."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    nq = pts.shape[0]
    if degree == 1:
        return lam, np.broadcast_to(_DLAMBDA, (nq, 3, 2)).copy()
    if degree != 2:
        raise ValueError(f"unsupported polynomial degree {degree}")
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DLAMBDA[i]
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
        grads[:, 3 + k] = 4.0 * (lam[:, j, None] * _DLAMBDA[i] + lam[:, i, None] * _DLAMBDA[j])
    return vals, grads


def vector_basis(values, grads):
    """Vector basis quantities for local dofs ordered ``2*node + component``.

    Parameters
    ----------
    values : (..., nloc) scalar basis values
    grads : (..., nloc, 2) physical gradients

    Returns
    -------
    vals : (..., 2*nloc, 2), curl : (..., 2*nloc), div : (..., 2*nloc)
    """
    shape = values.shape[:-1]
    nloc = values.shape[-1]
    vals = np.zeros(shape + (nloc, 2, 2))
    vals[..., 0, 0] = values
    vals[..., 1, 1] = values
    curl = np.stack([-grads[..., 1], grads[..., 0]], axis=-1)
    div = np.stack([grads[..., 0], grads[..., 1]], axis=-1)
    return (
        vals.reshape(shape + (2 * nloc, 2)),
        curl.reshape(shape + (2 * nloc,)),
        div.reshape(shape + (2 * nloc,)),
    )


class FeSystem:
    """Dof maps, geometry and quadrature for ``X_h x M_h`` on a mesh.

    Use :func:`build_system` to construct one.
    """

    def __init__(self, mesh, ell, mh_degree=None):
        if ell not in SUPPORTED_ELL:
            raise ValueError(f"ell must be one of {SUPPORTED_ELL}, got {ell}")
        self.mesh = mesh
        self.ell = ell
        self.degree = ell - 1
        self.mh_degree = self.degree if mh_degree is None else mh_degree
        if self.mh_degree not in (1, self.degree):
            raise ValueError("M_h degree must be 1 or equal to the X_h degree")
        quad_degree = 2 * self.degree + 2
        self.cell_rule = triangle_rule(quad_degree)
        self.edge_rule = line_rule(quad_degree)

        t = mesh.triangles
        p0 = mesh.vertices[t[:, 0]]
        jac = np.stack([mesh.vertices[t[:, 1]] - p0, mesh.vertices[t[:, 2]] - p0], axis=2)
        self.origin = p0
        self.jac = jac
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        self.inv_jac = np.linalg.inv(jac)

        self.tri_nodes, self.node_xy = self._nodes(self.degree)
        self.nloc = self.tri_nodes.shape[1]
        self._build_xh()
        self.mh_tri_nodes, mh_xy = self._nodes(self.mh_degree)
        self.nloc_m = self.mh_tri_nodes.shape[1]
        self._build_mh(mh_xy)

    def _nodes(self, degree):
        mesh = self.mesh
        if degree == 1:
            return mesh.triangles.copy(), mesh.vertices
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        nodes = np.hstack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])
        return nodes, np.vstack([mesh.vertices, mids])

    def _build_xh(self):
        sub = np.repeat(self.mesh.subdomains[:, None], self.nloc, axis=1)
        key = sub.astype(np.int64) * (self.node_xy.shape[0] + 1) + self.tri_nodes
        pairs, inverse = np.unique(key.ravel(), return_inverse=True)
        self.xh_node_sub = pairs // (self.node_xy.shape[0] + 1)
        self.xh_node = pairs % (self.node_xy.shape[0] + 1)
        pidx = inverse.reshape(self.tri_nodes.shape)
        dofs = np.empty((self.mesh.n_triangles, self.nloc, 2), dtype=np.int64)
        dofs[:, :, 0] = 2 * pidx
        dofs[:, :, 1] = 2 * pidx + 1
        self.xh_tri_dofs = dofs.reshape(self.mesh.n_triangles, 2 * self.nloc)
        self.n_xh = 2 * pairs.size

    def _build_mh(self, mh_xy):
        mesh = self.mesh
        nn = mh_xy.shape[0]
        on_boundary = np.zeros(nn, dtype=bool)
        bedges = np.flatnonzero(mesh.edge_kind == BOUNDARY)
        on_boundary[mesh.edges[bedges].ravel()] = True
        if self.mh_degree == 2:
            on_boundary[mesh.n_vertices + bedges] = True
        numbering = -np.ones(nn, dtype=np.int64)
        numbering[~on_boundary] = np.arange(int((~on_boundary).sum()))
        self.mh_node_xy = mh_xy
        self.mh_free_nodes = np.flatnonzero(~on_boundary)
        self.mh_tri_dofs = numbering[self.mh_tri_nodes]
        self.n_mh = int((~on_boundary).sum())

    @property
    def n_dofs(self):
        return self.n_xh + self.n_mh

    def map_points(self, tris, ref):
        """Physical coordinates of reference points ``ref`` (m, 2) in triangles ``tris`` (m,)."""
        return self.origin[tris] + np.einsum("mij,mj->mi", self.jac[tris], ref)

    def to_reference(self, tris, xy):
        return np.einsum("mij,mj->mi", self.inv_jac[tris], xy - self.origin[tris])

    def physical_grads(self, tris, ref_grads):
        """Map reference gradients (m, nloc, 2) to physical ones for triangles ``tris``."""
        return np.einsum("mkj,mlk->mlj", self.inv_jac[tris], ref_grads)

    def eval_basis(self, tri, ref_point, space="x"):
        """Scalar basis values and physical gradients at one reference point.

        ``space`` selects the X_h (``"x"``) or M_h (``"m"``) scalar basis.
        """
        degree = self.degree if space == "x" else self.mh_degree
        vals, grads = reference_basis(degree, np.asarray(ref_point, dtype=float)[None, :])
        phys = self.physical_grads(np.array([tri]), grads)
        return vals[0], phys[0]

    def evaluate(self, field, tris, ref):
        """Evaluate a :class:`DiscreteField` at reference points of given triangles.

        Returns a dict with ``E`` (m, 2), ``curl`` (m,), ``div`` (m,),
        ``p`` (m,) and ``grad_p`` (m, 2).
        """
        tris = np.asarray(tris)
        vals, grads = reference_basis(self.degree, ref)
        pg = self.physical_grads(tris, grads)
        vv, vc, vd = vector_basis(vals, pg)
        ce = field.e_coeffs[self.xh_tri_dofs[tris]]
        out = {
            "E": np.einsum("mlc,ml->mc", vv, ce),
            "curl": np.einsum("ml,ml->m", vc, ce),
            "div": np.einsum("ml,ml->m", vd, ce),
        }
        mvals, mgrads = reference_basis(self.mh_degree, ref)
        mpg = self.physical_grads(tris, mgrads)
        dofs = self.mh_tri_dofs[tris]
        p_ext = np.append(field.p_coeffs, 0.0)
        cp = p_ext[np.where(dofs >= 0, dofs, field.p_coeffs.size)]
        out["p"] = np.einsum("ml,ml->m", mvals, cp)
        out["grad_p"] = np.einsum("mlc,ml->mc", mpg, cp)
        return out

    def cell_points(self, rule=None):
        """Triangle ids, reference points, physical points and weights (with Jacobian)
        for a quadrature rule applied on every cell."""
        pts, wts = rule if rule is not None else self.cell_rule
        nt = self.mesh.n_triangles
        tris = np.repeat(np.arange(nt), len(wts))
        ref = np.tile(pts, (nt, 1))
        w = (self.det[:, None] * wts[None, :]).ravel()
        return tris, ref, self.map_points(tris, ref), w


def build_system(mesh, ell, mh_degree=None):
    """Build the discrete spaces of degree ``ell - 1`` on ``mesh``."""
    return FeSystem(mesh, ell, mh_degree=mh_degree)


@dataclass
class DiscreteField:
    """Coefficients of a pair (E_h, p_h) in ``X_h x M_h``."""

    e_coeffs: np.ndarray
    p_coeffs: np.ndarray
    residual: float = None

    @classmethod
    def zeros(cls, fe):
        return cls(np.zeros(fe.n_xh), np.zeros(fe.n_mh))

    @classmethod
    def from_vector(cls, fe, x):
        x = np.asarray(x)
        if x.shape != (fe.n_dofs,):
            raise ValueError(f"expected a vector of length {fe.n_dofs}, got {x.shape}")
        return cls(x[: fe.n_xh].copy(), x[fe.n_xh :].copy())

    def to_vector(self):
        return np.concatenate([self.e_coeffs, self.p_coeffs])

    def check(self, fe):
        if self.e_coeffs.shape != (fe.n_xh,) or self.p_coeffs.shape != (fe.n_mh,):
            raise ValueError("field does not match the finite element system")
        return self


def interpolate(fe, f, g=None):
    """Nodal interpolant of a vector field ``f`` into X_h and scalar ``g`` into M_h.

    ``f(xy, sub)`` must return (m, 2) values seen from subdomain ``sub``;
    ``g(xy, sub)`` returns (m,) values (``None`` means zero). Nodes on the
    boundary are not interpolated for ``g`` since M_h vanishes there.
    """
    xy = fe.node_xy[fe.xh_node]
    vals = np.asarray(f(xy, fe.xh_node_sub), dtype=float)
    if vals.shape != (xy.shape[0], 2):
        raise ValueError(f"vector field returned shape {vals.shape}, expected {(xy.shape[0], 2)}")
    e = vals.reshape(-1)
    p = np.zeros(fe.n_mh)
    if g is not None and fe.n_mh:
        # any triangle containing the node gives its subdomain; M_h is continuous
        owner = np.empty(fe.mh_node_xy.shape[0], dtype=np.int64)
        owner[fe.mh_tri_nodes.ravel()] = np.repeat(fe.mesh.subdomains, fe.nloc_m)
        nodes = fe.mh_free_nodes
        p = np.asarray(g(fe.mh_node_xy[nodes], owner[nodes]), dtype=float).reshape(-1)
    return DiscreteField(e, p)
