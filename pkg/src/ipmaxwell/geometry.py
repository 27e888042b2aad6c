"""
Triangular meshes conforming to a subdomain partition.

Meshes carry their vertices, counterclockwise triangles with a subdomain id,
and a classification of every edge as interior (both neighbours in the same
subdomain), interface (neighbours in different subdomains) or boundary.

Examples
--------
>>> m = generate_structured(DomainSpec("square_checkerboard"), 0.5)
>>> m.n_vertices, m.n_triangles, m.edge_counts()["interface"]
(25, 32, 8)
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

INTERIOR, INTERFACE, BOUNDARY = 0, 1, 2
EDGE_KIND_NAMES = {INTERIOR: "interior", INTERFACE: "interface", BOUNDARY: "boundary"}

DOMAIN_KINDS = ("square_checkerboard", "lshape_three_subdomains", "unit_square_single")


class MeshError(ValueError):
    """Raised for structurally invalid meshes or malformed mesh files."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangular mesh with subdomain tags.

    Only ``vertices``, ``triangles`` and ``subdomains`` are inputs; the edge
    arrays are derived on construction.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    subdomains : (nt,) int array, ids >= 1
    edges : (ne, 2) int array, sorted vertex pairs
    edge_kind : (ne,) int array with INTERIOR / INTERFACE / BOUNDARY
    edge_tris : (ne, 2) int array, second entry -1 on the boundary
    tri_edges : (nt, 3) int array, ``tri_edges[t, j]`` is the edge opposite
        local vertex ``j``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomains: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    edge_kind: np.ndarray = field(init=False, repr=False)
    edge_tris: np.ndarray = field(init=False, repr=False)
    tri_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = _frozen(self.vertices, float)
        t = _frozen(self.triangles, np.int64)
        s = _frozen(self.subdomains, np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (nt, 3)")
        if s.shape != (t.shape[0],):
            raise MeshError("one subdomain id per triangle is required")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("triangle references a vertex index out of range")
        if s.size and s.min() < 1:
            raise MeshError("subdomain ids must be >= 1")
        if np.any(signed_areas(v, t) <= 0.0):
            bad = int(np.flatnonzero(signed_areas(v, t) <= 0.0)[0])
            raise MeshError(f"triangle {bad} is degenerate or clockwise")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "subdomains", s)
        edges, kind, etris, tedges = _build_edges(t, s)
        object.__setattr__(self, "edges", _frozen(edges, np.int64))
        object.__setattr__(self, "edge_kind", _frozen(kind, np.int64))
        object.__setattr__(self, "edge_tris", _frozen(etris, np.int64))
        object.__setattr__(self, "tri_edges", _frozen(tedges, np.int64))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def subdomain_count(self):
        return int(self.subdomains.max())

    @property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def h(self):
        """Maximum triangle diameter (longest edge)."""
        return float(self.edge_lengths.max())

    def cell_diameters(self):
        return self.edge_lengths[self.tri_edges].max(axis=1)

    def areas(self):
        return 0.5 * signed_areas(self.vertices, self.triangles)

    def edge_counts(self):
        return {name: int(np.sum(self.edge_kind == k)) for k, name in EDGE_KIND_NAMES.items()}

    def same_as(self, other, atol=0.0):
        """True if both meshes have identical vertices, triangles and ids."""
        return (
            self.vertices.shape == other.vertices.shape
            and np.allclose(self.vertices, other.vertices, rtol=0.0, atol=atol)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.subdomains, other.subdomains)
        )


def signed_areas(vertices, triangles):
    """Twice the signed area of each triangle."""
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    return (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (
        p2[:, 0] - p0[:, 0]
    )


def _build_edges(triangles, subdomains):
    nt = triangles.shape[0]
    # local edge j is opposite local vertex j
    loc = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = np.sort(triangles[:, loc].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        e = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(f"non-manifold edge {tuple(edges[e])} shared by {counts[e]} triangles")
    tri_of = np.repeat(np.arange(nt), 3)
    order = np.argsort(inverse, kind="stable")
    etris = -np.ones((edges.shape[0], 2), dtype=np.int64)
    first = np.ones(order.size, dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    etris[inverse[order][first], 0] = tri_of[order][first]
    etris[inverse[order][~first], 1] = tri_of[order][~first]
    kind = np.full(edges.shape[0], BOUNDARY, dtype=np.int64)
    both = etris[:, 1] >= 0
    same = subdomains[etris[both, 0]] == subdomains[etris[both, 1]]
    kind[np.flatnonzero(both)[same]] = INTERIOR
    kind[np.flatnonzero(both)[~same]] = INTERFACE
    return edges, kind, etris, inverse.reshape(nt, 3)


def classify_edges(mesh):
    """Return a mesh with freshly computed edge classification.

    Classification is a pure function of the triangles and subdomain ids,
    so this is idempotent.
    """
    return Mesh(mesh.vertices, mesh.triangles, mesh.subdomains)


@dataclass(frozen=True)
class DomainSpec:
    """One of the benchmark domains.

    ``square_checkerboard`` is (-1,1)^2 split into the four quadrants,
    ``lshape_three_subdomains`` is (-1,1)^2 minus [0,1]x[-1,0] split into
    three quadrants, ``unit_square_single`` is (0,1)^2 with one subdomain.
    Quadrant ids: 1 = (0,1)^2, 2 = (-1,0)x(0,1), 3 = (-1,0)^2, 4 = (0,1)x(-1,0).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}; expected one of {DOMAIN_KINDS}")

    def unit_cells(self):
        """Lower-left corners and subdomain ids of the unit squares making up the domain."""
        if self.kind == "unit_square_single":
            return [((0.0, 0.0), 1)]
        cells = [((0.0, 0.0), 1), ((-1.0, 0.0), 2), ((-1.0, -1.0), 3)]
        if self.kind == "square_checkerboard":
            cells.append(((0.0, -1.0), 4))
        return cells

    def subdomain_of(self, x, y):
        """Subdomain id of the points (x, y); 0 outside the domain."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape, dtype=np.int64)
        for (x0, y0), sid in self.unit_cells():
            inside = (x > x0) & (x < x0 + 1) & (y > y0) & (y < y0 + 1)
            out[inside] = sid
        return out


def generate_structured(domain, target_h):
    """Structured mesh of ``domain`` with ``n = round(1/target_h)`` squares per unit side.

    Each square is cut along the diagonal pointing toward the origin, so all
    diagonals are parallel to y = x in quadrants 1 and 3 and to y = -x in
    quadrants 2 and 4.
    """
    if not target_h > 0 or target_h > 1:
        raise ValueError(f"target_h must lie in (0, 1], got {target_h}")
    if isinstance(domain, str):
        domain = DomainSpec(domain)
    n = max(1, int(round(1.0 / target_h)))
    d = 1.0 / n
    cells = domain.unit_cells()
    xmin = min(c[0][0] for c in cells)
    ymin = min(c[0][1] for c in cells)
    nx = int(round((max(c[0][0] for c in cells) + 1 - xmin) * n)) + 1
    ny = int(round((max(c[0][1] for c in cells) + 1 - ymin) * n)) + 1

    squares = []
    for (x0, y0), sid in cells:
        i0 = int(round((x0 - xmin) * n))
        j0 = int(round((y0 - ymin) * n))
        toward = (x0 + 0.5) * (y0 + 0.5) > 0
        for j in range(n):
            for i in range(n):
                squares.append((j0 + j, i0 + i, sid, toward))
    squares.sort()

    used = np.zeros((ny, nx), dtype=bool)
    for j, i, _, _ in squares:
        used[j : j + 2, i : i + 2] = True
    index = -np.ones((ny, nx), dtype=np.int64)
    index[used] = np.arange(int(used.sum()))
    jj, ii = np.nonzero(used)
    vertices = np.column_stack([xmin + ii * d, ymin + jj * d])

    tris, subs = [], []
    for j, i, sid, slash in squares:
        a, b = index[j, i], index[j, i + 1]
        c, e = index[j + 1, i + 1], index[j + 1, i]
        if slash:
            tris += [(a, b, c), (a, c, e)]
        else:
            tris += [(a, b, e), (b, c, e)]
        subs += [sid, sid]
    return Mesh(vertices, np.array(tris), np.array(subs))


def _incenters(vertices, triangles):
    p = [vertices[triangles[:, i]] for i in range(3)]
    side = [np.linalg.norm(p[(i + 1) % 3] - p[(i + 2) % 3], axis=1) for i in range(3)]
    total = side[0] + side[1] + side[2]
    return sum(side[i][:, None] * p[i] for i in range(3)) / total[:, None]


def powell_sabin_refine(mesh):
    """Split each triangle into six around its incenter.

    The incenter is joined to the three vertices and to the three edge
    midpoints; midpoints are shared between neighbours so the result stays
    conforming.
    """
    nv, ne = mesh.n_vertices, mesh.n_edges
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    centers = _incenters(mesh.vertices, mesh.triangles)
    vertices = np.vstack([mesh.vertices, mids, centers])
    t = mesh.triangles
    m = nv + mesh.tri_edges  # m[:, j] is the midpoint opposite vertex j
    c = nv + ne + np.arange(mesh.n_triangles)
    children = np.stack(
        [
            np.column_stack([t[:, 0], m[:, 2], c]),
            np.column_stack([m[:, 2], t[:, 1], c]),
            np.column_stack([t[:, 1], m[:, 0], c]),
            np.column_stack([m[:, 0], t[:, 2], c]),
            np.column_stack([t[:, 2], m[:, 1], c]),
            np.column_stack([m[:, 1], t[:, 0], c]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(vertices, children, np.repeat(mesh.subdomains, 6))


def hct_refine(mesh):
    """Split each triangle into three around its barycenter."""
    nv = mesh.n_vertices
    t = mesh.triangles
    centers = mesh.vertices[t].mean(axis=1)
    vertices = np.vstack([mesh.vertices, centers])
    c = nv + np.arange(mesh.n_triangles)
    children = np.stack(
        [
            np.column_stack([t[:, 0], t[:, 1], c]),
            np.column_stack([t[:, 1], t[:, 2], c]),
            np.column_stack([t[:, 2], t[:, 0], c]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(vertices, children, np.repeat(mesh.subdomains, 3))


REFINERS = {"structured": None, "powell-sabin": powell_sabin_refine, "hct": hct_refine}


def make_mesh(domain, target_h, style="structured"):
    """Structured mesh optionally followed by a Powell-Sabin or HCT split."""
    if style not in REFINERS:
        raise ValueError(f"unknown mesh style {style!r}; expected one of {sorted(REFINERS)}")
    mesh = generate_structured(domain, target_h)
    refine = REFINERS[style]
    return refine(mesh) if refine else mesh


def write_mesh(mesh, path):
    """Write ``mesh`` in the plain-text ``nv nt`` / ``x y`` / ``v0 v1 v2 sub`` format."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c} {s}" for (a, b, c), s in zip(mesh.triangles, mesh.subdomains)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path, strict=False):
    """Read a mesh written by :func:`write_mesh`.

    Clockwise triangles are reoriented with a warning, or rejected when
    ``strict`` is set. Malformed content raises :class:`MeshError` with the
    offending line number.
    """
    with open(path, encoding="utf-8") as fh:
        rows = [
            (no, line.split())
            for no, line in enumerate(fh, start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not rows:
        raise MeshError(f"{path}: empty mesh file")

    def ints(no, tok, count):
        if len(tok) != count:
            raise MeshError(f"{path}:{no}: expected {count} fields, got {len(tok)}")
        try:
            return [int(x) for x in tok]
        except ValueError as exc:
            raise MeshError(f"{path}:{no}: {exc}") from None

    no, tok = rows[0]
    nv, nt = ints(no, tok, 2)
    if len(rows) != 1 + nv + nt:
        raise MeshError(f"{path}: header announces {nv} vertices and {nt} triangles, "
                        f"found {len(rows) - 1} data lines")
    vertices = np.empty((nv, 2))
    for k, (no, tok) in enumerate(rows[1 : 1 + nv]):
        if len(tok) != 2:
            raise MeshError(f"{path}:{no}: expected 2 coordinates, got {len(tok)}")
        try:
            vertices[k] = [float(x) for x in tok]
        except ValueError as exc:
            raise MeshError(f"{path}:{no}: {exc}") from None
    triangles = np.empty((nt, 3), dtype=np.int64)
    subdomains = np.empty(nt, dtype=np.int64)
    for k, (no, tok) in enumerate(rows[1 + nv :]):
        a, b, c, s = ints(no, tok, 4)
        if min(a, b, c) < 0 or max(a, b, c) >= nv:
            raise MeshError(f"{path}:{no}: vertex index out of range [0, {nv})")
        if s < 1:
            raise MeshError(f"{path}:{no}: subdomain id must be >= 1")
        area = signed_areas(vertices, np.array([[a, b, c]]))[0]
        if area == 0.0:
            raise MeshError(f"{path}:{no}: degenerate triangle")
        if area < 0.0:
            if strict:
                raise MeshError(f"{path}:{no}: clockwise triangle")
            warnings.warn(f"{path}:{no}: clockwise triangle reoriented", stacklevel=2)
            b, c = c, b
        triangles[k] = (a, b, c)
        subdomains[k] = s
    return Mesh(vertices, triangles, subdomains)
