"""
Interior-penalty assembly for the mixed curl-curl problem.

The unknown is the pair (E, p) in ``X_h x M_h``; the global vector stores the
E dofs first and the p dofs after them. The bilinear form combines

* broken curl-curl: ``(kappa curl E, curl F)`` cell by cell,
* consistency, adjoint (``theta``) and ``gamma / h`` penalty terms for the
  tangential jump on interfaces and on the boundary,
* the multiplier coupling ``(eps grad p, F) - (eps E, grad q)``,
* the ``c_alpha``-scaled stabilisation ``h^{2a} (div eps E, div eps F)
  + h^{2(1-a)} (eps grad p, grad q) + h^{2a-1} ([eps E.n], [eps F.n])``, the
  last one on interfaces only.

2D conventions: ``curl v = d1 v2 - d2 v1``, ``curl w = (d2 w, -d1 w)`` and
``v x n = v1 n2 - v2 n1``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import reference_basis, vector_basis
from .geometry import BOUNDARY, INTERFACE

CHUNK = 20000


@dataclass(frozen=True)
class PenaltyParams:
    """Method parameters.

    ``allow_alpha_one`` lifts the ``alpha < 1`` restriction for eigenvalue
    runs; it exists to reproduce the spectral pollution seen at ``alpha = 1``.
    """

    alpha: float = 0.9
    gamma: float = 10.0
    c_alpha: float = 1.0
    theta: int = 1
    use_global_h: bool = True
    allow_alpha_one: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.c_alpha > 0:
            raise ValueError(f"c_alpha must be positive, got {self.c_alpha}")
        if self.theta not in (-1, 0, 1):
            raise ValueError(f"theta must be -1, 0 or 1, got {self.theta}")

    def check_eigen(self):
        if self.theta != 1:
            raise ValueError("eigenvalue assembly requires the symmetric variant theta = 1")
        if self.alpha >= 1.0 and not self.allow_alpha_one:
            raise ValueError(
                "eigenvalue runs require alpha < 1 "
                "(allow_alpha_one, or --allow-alpha-one on the command line, overrides)"
            )


@dataclass
class SparseSystem:
    """Saddle-point matrix (CSR) and right-hand side in ``[E | p]`` layout."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_xh: int
    n_mh: int

    def sign_flip(self):
        """Diagonal of ``D``: +1 on E dofs, -1 on p dofs."""
        return np.concatenate([np.ones(self.n_xh), -np.ones(self.n_mh)])


def _check_coeffs(fe, coeffs):
    if coeffs.n_subdomains < fe.mesh.subdomain_count:
        raise ValueError(
            f"coefficient field has {coeffs.n_subdomains} values, "
            f"mesh has {fe.mesh.subdomain_count} subdomains"
        )


def cell_h(fe, params):
    if params.use_global_h:
        return np.full(fe.mesh.n_triangles, fe.mesh.h)
    return fe.mesh.cell_diameters()


def face_h(fe, params, edges):
    if params.use_global_h:
        return np.full(len(edges), fe.mesh.h)
    return fe.mesh.edge_lengths[edges]


class _Scatter:
    """Accumulate dense local blocks into a global sparse matrix."""

    def __init__(self, n):
        self.n = n
        self.parts = []

    def add(self, rows, cols, vals):
        r = np.broadcast_to(rows[:, :, None], vals.shape)
        c = np.broadcast_to(cols[:, None, :], vals.shape)
        keep = (r >= 0) & (c >= 0)
        self.parts.append(
            sp.coo_matrix((vals[keep], (r[keep], c[keep])), shape=(self.n, self.n)).tocsr()
        )

    def result(self):
        out = sp.csr_matrix((self.n, self.n))
        for part in self.parts:
            out = out + part
        out.sum_duplicates()
        out.sort_indices()
        return out


def _global_p(fe, tris):
    d = fe.mh_tri_dofs[tris]
    return np.where(d >= 0, d + fe.n_xh, -1)


def _cell_data(fe, coeffs, params, tris):
    pts, wts = fe.cell_rule
    vals, grads = reference_basis(fe.degree, pts)
    pg = np.einsum("tkj,qlk->tqlj", fe.inv_jac[tris], grads)
    vv, _, _ = vector_basis(vals, grads)  # values do not depend on the cell
    _, curl, div = vector_basis(np.broadcast_to(vals, pg.shape[:-1]), pg)
    mvals, mgrads = reference_basis(fe.mh_degree, pts)
    mg = np.einsum("tkj,qlk->tqlj", fe.inv_jac[tris], mgrads)
    eps, kappa = coeffs.per_cell(fe.mesh.subdomains[tris])
    h = cell_h(fe, params)[tris]
    W = fe.det[tris, None] * wts[None, :]
    return dict(vv=vv, curl=curl, div=div, mg=mg, eps=eps, kappa=kappa, h=h, W=W)


def _cell_chunks(fe):
    nt = fe.mesh.n_triangles
    for start in range(0, nt, CHUNK):
        yield np.arange(start, min(nt, start + CHUNK))


def face_data(fe, edges, rule=None):
    """Traces on both sides of the given edges at edge quadrature points.

    Side 0 is ``edge_tris[e, 0]``; side 1 is absent (``tri == -1``) on
    boundary edges. Each side carries its outward normal.
    """
    mesh = fe.mesh
    pts, wts = rule if rule is not None else fe.edge_rule
    edges = np.asarray(edges)
    nf, nq = len(edges), len(wts)
    t0 = mesh.edge_tris[edges, 0]
    j0 = np.argmax(mesh.tri_edges[t0] == edges[:, None], axis=1)
    tv = mesh.triangles[t0]
    a = mesh.vertices[tv[np.arange(nf), (j0 + 1) % 3]]
    b = mesh.vertices[tv[np.arange(nf), (j0 + 2) % 3]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    n0 = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    xy = a[:, None, :] + pts[None, :, None] * d[:, None, :]
    w = length[:, None] * wts[None, :]
    sides = []
    for s, tri, normal in ((0, t0, n0), (1, mesh.edge_tris[edges, 1], -n0)):
        if s == 1 and np.all(tri < 0):
            sides.append(None)
            continue
        tri_q = np.repeat(tri, nq)
        ref = fe.to_reference(tri_q, xy.reshape(-1, 2))
        sides.append(dict(tri=tri, tri_q=tri_q, ref=ref, n=normal))
    return dict(edges=edges, xy=xy, w=w, sides=sides, nq=nq)


def _side_basis(fe, side, nf, nq):
    vals, grads = reference_basis(fe.degree, side["ref"])
    pg = fe.physical_grads(side["tri_q"], grads)
    vv, curl, _ = vector_basis(vals, pg)
    vv = vv.reshape(nf, nq, -1, 2)
    n = side["n"][:, None, None, :]
    tang = vv[..., 0] * n[..., 1] - vv[..., 1] * n[..., 0]
    norm = vv[..., 0] * n[..., 0] + vv[..., 1] * n[..., 1]
    return curl.reshape(nf, nq, -1), tang, norm


def _face_terms(fe, coeffs, params, kind, edges):
    """Local face matrices ``(rows, cols, vals)`` for boundary or interface edges."""
    fd = face_data(fe, edges)
    nf, nq = len(edges), fd["nq"]
    w = fd["w"]
    h = face_h(fe, params, edges)
    s0 = fd["sides"][0]
    c0, t0, _ = _side_basis(fe, s0, nf, nq)
    eps0, kap0 = coeffs.per_cell(fe.mesh.subdomains[s0["tri"]])
    dofs = fe.xh_tri_dofs[s0["tri"]]
    if kind == BOUNDARY:
        T, Cav, kav = t0, kap0[:, None, None] * c0, kap0
        N = None
    else:
        s1 = fd["sides"][1]
        c1, t1, nn1 = _side_basis(fe, s1, nf, nq)
        _, _, nn0 = _side_basis(fe, s0, nf, nq)
        eps1, kap1 = coeffs.per_cell(fe.mesh.subdomains[s1["tri"]])
        T = np.concatenate([t0, t1], axis=2)
        Cav = np.concatenate([0.5 * kap0[:, None, None] * c0, 0.5 * kap1[:, None, None] * c1], axis=2)
        kav = 0.5 * (kap0 + kap1)
        N = np.concatenate([eps0[:, None, None] * nn0, eps1[:, None, None] * nn1], axis=2)
        dofs = np.hstack([dofs, fe.xh_tri_dofs[s1["tri"]]])
    # rows: test F, cols: trial E
    vals = np.einsum("fq,fqi,fqj->fij", w, T, Cav)
    vals += params.theta * np.einsum("fq,fqi,fqj->fij", w, Cav, T)
    vals += (params.gamma * kav / h)[:, None, None] * np.einsum("fq,fqi,fqj->fij", w, T, T)
    if N is not None:
        scale = params.c_alpha * h ** (2 * params.alpha - 1)
        vals += scale[:, None, None] * np.einsum("fq,fqi,fqj->fij", w, N, N)
    return dofs, vals


def _edges_of(fe, kind):
    return np.flatnonzero(fe.mesh.edge_kind == kind)


def assemble_ah(fe, coeffs, params):
    """Matrix of the bilinear form; row = test function, column = trial function."""
    _check_coeffs(fe, coeffs)
    acc = _Scatter(fe.n_dofs)
    for tris in _cell_chunks(fe):
        cd = _cell_data(fe, coeffs, params, tris)
        W, eps, kap, h = cd["W"], cd["eps"], cd["kappa"], cd["h"]
        c = params.c_alpha * h ** (2 * (1 - params.alpha))
        ee = kap[:, None, None] * np.einsum("tq,tqi,tqj->tij", W, cd["curl"], cd["curl"])
        ee += (params.c_alpha * h ** (2 * params.alpha) * eps**2)[:, None, None] * np.einsum(
            "tq,tqi,tqj->tij", W, cd["div"], cd["div"]
        )
        ep = eps[:, None, None] * np.einsum("tq,qic,tqjc->tij", W, cd["vv"], cd["mg"])
        pp = (c * eps)[:, None, None] * np.einsum("tq,tqic,tqjc->tij", W, cd["mg"], cd["mg"])
        ed = fe.xh_tri_dofs[tris]
        pd = _global_p(fe, tris)
        acc.add(ed, ed, ee)
        acc.add(ed, pd, ep)
        acc.add(pd, ed, -ep.transpose(0, 2, 1))
        acc.add(pd, pd, pp)
    for kind in (BOUNDARY, INTERFACE):
        edges = _edges_of(fe, kind)
        for start in range(0, len(edges), CHUNK):
            dofs, vals = _face_terms(fe, coeffs, params, kind, edges[start : start + CHUNK])
            acc.add(dofs, dofs, vals)
    return SparseSystem(acc.result(), np.zeros(fe.n_dofs), fe.n_xh, fe.n_mh)


def assemble_rhs(fe, coeffs, params, g=None, g_t=None):
    """Right-hand side ``(eps g, F) + c_alpha h^{2(1-alpha)} (eps g, grad q)``
    plus the Nitsche lifting of tangential boundary data.

    ``g(xy, sub)`` returns (m, 2) source values. ``g_t(xy, n, sub)`` returns
    the prescribed ``E x n`` on boundary points with outward normals ``n``.
    """
    _check_coeffs(fe, coeffs)
    rhs = np.zeros(fe.n_dofs)
    if g is not None:
        for tris in _cell_chunks(fe):
            cd = _cell_data(fe, coeffs, params, tris)
            pts, _ = fe.cell_rule
            nq = len(pts)
            tq = np.repeat(tris, nq)
            xy = fe.map_points(tq, np.tile(pts, (len(tris), 1)))
            gv = np.asarray(g(xy, fe.mesh.subdomains[tq]), dtype=float).reshape(len(tris), nq, 2)
            W, eps, h = cd["W"], cd["eps"], cd["h"]
            c = params.c_alpha * h ** (2 * (1 - params.alpha))
            be = eps[:, None] * np.einsum("tq,tqc,qic->ti", W, gv, cd["vv"])
            bp = (c * eps)[:, None] * np.einsum("tq,tqc,tqic->ti", W, gv, cd["mg"])
            np.add.at(rhs, fe.xh_tri_dofs[tris].ravel(), be.ravel())
            pd = _global_p(fe, tris)
            keep = pd >= 0
            np.add.at(rhs, pd[keep], bp[keep])
    if g_t is not None:
        edges = _edges_of(fe, BOUNDARY)
        if edges.size == 0:
            raise ValueError("tangential boundary data given but the mesh has no boundary edges")
        fd = face_data(fe, edges)
        nf, nq = len(edges), fd["nq"]
        s0 = fd["sides"][0]
        curl, tang, _ = _side_basis(fe, s0, nf, nq)
        _, kap = coeffs.per_cell(fe.mesh.subdomains[s0["tri"]])
        nrm = np.repeat(s0["n"], nq, axis=0)
        gt = np.asarray(
            g_t(fd["xy"].reshape(-1, 2), nrm, fe.mesh.subdomains[s0["tri_q"]]), dtype=float
        ).reshape(nf, nq)
        h = face_h(fe, params, edges)
        wg = fd["w"] * gt
        bvals = params.theta * kap[:, None] * np.einsum("fq,fqi->fi", wg, curl)
        bvals += (params.gamma * kap / h)[:, None] * np.einsum("fq,fqi->fi", wg, tang)
        np.add.at(rhs, fe.xh_tri_dofs[s0["tri"]].ravel(), bvals.ravel())
    return rhs


def tangential_data(vector_field):
    """Wrap a vector field ``f(xy, sub)`` as boundary data ``f x n``."""

    def g_t(xy, n, sub):
        v = vector_field(xy, sub)
        return v[:, 0] * n[:, 1] - v[:, 1] * n[:, 0]

    return g_t


def assemble_system(fe, coeffs, params, g=None, g_t=None):
    system = assemble_ah(fe, coeffs, params)
    system.rhs = assemble_rhs(fe, coeffs, params, g, g_t)
    return system


def assemble_pencil(fe, coeffs, params):
    """Symmetric pencil ``(A', B')`` whose finite eigenvalues approximate Maxwell eigenvalues.

    ``A'`` is the bilinear form matrix with the multiplier test rows negated.
    ``B'`` is the Gram matrix of ``E - c grad p`` in the eps-weighted L2
    product, ``c = c_alpha h^{2(1-alpha)}``, so it is positive semidefinite.
    """
    params.check_eigen()
    system = assemble_ah(fe, coeffs, params)
    flip = sp.diags(system.sign_flip())
    a_prime = (flip @ system.matrix).tocsr()
    return a_prime, eps_gram(fe, coeffs, params)


def eps_gram(fe, coeffs, params):
    """Gram matrix of ``(E, p) -> E - c_alpha h^{2(1-alpha)} grad p`` in the eps-product."""
    _check_coeffs(fe, coeffs)
    acc = _Scatter(fe.n_dofs)
    for tris in _cell_chunks(fe):
        cd = _cell_data(fe, coeffs, params, tris)
        W, eps, h = cd["W"], cd["eps"], cd["h"]
        c = params.c_alpha * h ** (2 * (1 - params.alpha))
        ee = eps[:, None, None] * np.einsum("tq,qic,qjc->tij", W, cd["vv"], cd["vv"])
        ep = (-c * eps)[:, None, None] * np.einsum("tq,qic,tqjc->tij", W, cd["vv"], cd["mg"])
        pp = (c * c * eps)[:, None, None] * np.einsum("tq,tqic,tqjc->tij", W, cd["mg"], cd["mg"])
        ed = fe.xh_tri_dofs[tris]
        pd = _global_p(fe, tris)
        acc.add(ed, ed, ee)
        acc.add(ed, pd, ep)
        acc.add(pd, ed, ep.transpose(0, 2, 1))
        acc.add(pd, pd, pp)
    return acc.result()


def source_matrix(fe, coeffs, params):
    """Matrix mapping a pair (E, p), read as the field ``E - c grad p``,
    to the right-hand side it generates."""
    gram = eps_gram(fe, coeffs, params)
    flip = sp.diags(np.concatenate([np.ones(fe.n_xh), -np.ones(fe.n_mh)]))
    return (flip @ gram).tocsr()


def discrete_norm(fe, coeffs, params, field, exact=None):
    """Discrete energy norm of ``field``, or of ``field - exact`` when given.

    The norm is evaluated by quadrature of the field itself, independently
    of the assembled matrix. ``exact`` provides ``field``, ``curl`` and
    ``div`` callables of ``(xy, sub)``; its multiplier is taken as zero.
    """
    field.check(fe)
    _check_coeffs(fe, coeffs)
    a, gamma, c_a = params.alpha, params.gamma, params.c_alpha
    tris, ref, xy, w = fe.cell_points()
    ev = fe.evaluate(field, tris, ref)
    sub = fe.mesh.subdomains[tris]
    eps, kap = coeffs.per_cell(sub)
    h = cell_h(fe, params)[tris]
    curl, div = ev["curl"], ev["div"]
    if exact is not None:
        curl = curl - exact.curl(xy, sub)
        div = div - exact.div(xy, sub)
    total = np.sum(w * kap * curl**2)
    total += c_a * np.sum(w * h ** (2 * a) * (eps * div) ** 2)
    total += c_a * np.sum(w * h ** (2 * (1 - a)) * eps * np.sum(ev["grad_p"] ** 2, axis=1))

    for kind in (BOUNDARY, INTERFACE):
        edges = _edges_of(fe, kind)
        if edges.size == 0:
            continue
        fd = face_data(fe, edges)
        nq = fd["nq"]
        hf = np.repeat(face_h(fe, params, edges), nq)
        wf = fd["w"].ravel()
        tjump = 0.0
        njump = 0.0
        kav = 0.0
        nsides = 1 if kind == BOUNDARY else 2
        for side in fd["sides"][:nsides]:
            s_sub = fe.mesh.subdomains[side["tri_q"]]
            e_s, k_s = coeffs.per_cell(s_sub)
            val = fe.evaluate(field, side["tri_q"], side["ref"])["E"]
            if exact is not None:
                val = val - exact.field(fd["xy"].reshape(-1, 2), s_sub)
            n = np.repeat(side["n"], nq, axis=0)
            tjump = tjump + val[:, 0] * n[:, 1] - val[:, 1] * n[:, 0]
            njump = njump + e_s * (val[:, 0] * n[:, 0] + val[:, 1] * n[:, 1])
            kav = kav + k_s / nsides
        total += gamma * np.sum(wf * kav * tjump**2 / hf)
        if kind == INTERFACE:
            total += c_a * np.sum(wf * hf ** (2 * a - 1) * njump**2)
    return float(np.sqrt(total))


def write_coo(matrix, path):
    """Dump a sparse matrix as ``row col value`` lines (0-based)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
