"""Tetrahedral domain meshes and watertight boundary triangulations.

Two canonical Lipschitz domains are built in: the unit cube [0,1]^3 (Kuhn
split of an m^3 grid) and the unit ball (radially layered tets over a
subdivided octahedron surface).  Arbitrary meshes can be loaded from the
plain-text ``bdiemesh 1`` format.

The boundary triangulation is always extracted from the tet mesh, so the
surface triangles coincide with boundary faces of tets by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .quadrature import tet_volume, triangle_area


class MeshValidationError(ValueError):
    pass


class MeshParseError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class BoundaryMesh:
    """Watertight surface triangulation with outward unit normals."""

    vertices: np.ndarray          # (nv, 3), shared with the domain mesh
    triangles: np.ndarray         # (nt, 3) int, outward-oriented
    normals: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float)
        self.triangles = np.asarray(self.triangles, int)
        v = self.vertices[self.triangles]
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        nrm = np.linalg.norm(cr, axis=1)
        if np.any(nrm <= 0):
            raise MeshValidationError("degenerate boundary triangle")
        self.normals = cr / nrm[:, None]
        self.areas = 0.5 * nrm

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def diameters(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        e = np.stack([
            np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
            np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
            np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
        ])
        return e.max(axis=0)

    def check_watertight(self):
        edges = {}
        for t, tri in enumerate(self.triangles):
            for i in range(3):
                e = tuple(sorted((tri[i], tri[(i + 1) % 3])))
                edges.setdefault(e, 0)
                edges[e] += 1
        bad = [e for e, c in edges.items() if c != 2]
        if bad:
            raise MeshValidationError(
                f"{len(bad)} edges not shared by exactly two triangles")


@dataclass
class DomainMesh:
    """Tetrahedralization of the domain; vertices include the boundary."""

    vertices: np.ndarray          # (nv, 3)
    tets: np.ndarray              # (nt, 4) int, positively oriented
    volumes: np.ndarray = field(init=False)
    boundary_vertex_ids: np.ndarray = field(init=False)
    interior_vertex_ids: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, float)
        self.tets = np.asarray(self.tets, int)
        v = self.vertices[self.tets]
        self.volumes = np.linalg.det(v[:, 1:] - v[:, :1]) / 6.0
        if np.any(self.volumes <= 0):
            raise MeshValidationError("tet with non-positive volume")
        faces = self._boundary_faces()
        bset = sorted({i for f in faces for i in f})
        self.boundary_vertex_ids = np.array(bset, dtype=int)
        mask = np.ones(len(self.vertices), dtype=bool)
        mask[self.boundary_vertex_ids] = False
        self.interior_vertex_ids = np.nonzero(mask)[0]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def _face_count(self):
        count = {}
        order = {}
        for t, tet in enumerate(self.tets):
            for k in range(4):
                f = [tet[i] for i in range(4) if i != k]
                key = tuple(sorted(f))
                count[key] = count.get(key, 0) + 1
                order[key] = (t, k)
        return count, order

    def _boundary_faces(self):
        count, _ = self._face_count()
        return [f for f, c in count.items() if c == 1]

    def extract_boundary(self) -> BoundaryMesh:
        """Boundary faces of the tets, oriented with outward normals."""
        count, order = self._face_count()
        tris = []
        for key, c in count.items():
            if c != 1:
                continue
            t, k = order[key]
            tet = self.tets[t]
            f = [tet[i] for i in range(4) if i != k]
            a, b, cth = (self.vertices[i] for i in f)
            n = np.cross(b - a, cth - a)
            inward = self.vertices[tet[k]] - (a + b + cth) / 3.0
            if np.dot(n, inward) > 0:      # normal must point away from the tet
                f = [f[0], f[2], f[1]]
            tris.append(f)
        return BoundaryMesh(self.vertices, np.array(sorted(tris), dtype=int))

    def max_edge_length(self) -> float:
        v = self.vertices[self.tets]
        m = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                m = max(m, float(np.max(np.linalg.norm(v[:, i] - v[:, j], axis=1))))
        return m

    def tet_diameters(self) -> np.ndarray:
        v = self.vertices[self.tets]
        d = np.zeros(len(self.tets))
        for i in range(4):
            for j in range(i + 1, 4):
                d = np.maximum(d, np.linalg.norm(v[:, i] - v[:, j], axis=1))
        return d


# ---------------------------------------------------------------------------
# canonical domains


def build_cube_mesh(m: int):
    """Unit cube [0,1]^3: m^3 subcubes, each Kuhn-split into 6 tets."""
    if m < 1:
        raise ValueError("refinement m must be >= 1")
    n = m + 1
    idx = lambda i, j, k: (i * n + j) * n + k
    grid = np.linspace(0.0, 1.0, n)
    vertices = np.array([[grid[i], grid[j], grid[k]]
                         for i in range(n) for j in range(n) for k in range(n)])
    steps = [np.array(p) for p in permutations([(1, 0, 0), (0, 1, 0), (0, 0, 1)])]
    tets = []
    for i in range(m):
        for j in range(m):
            for k in range(m):
                base = np.array([i, j, k])
                for perm in steps:
                    c = [base]
                    for s in perm:
                        c.append(c[-1] + s)
                    quad = [idx(*p) for p in c]
                    v = vertices[quad]
                    if np.linalg.det(v[1:] - v[0]) < 0:
                        quad[1], quad[2] = quad[2], quad[1]
                    tets.append(quad)
    dom = DomainMesh(vertices, np.array(tets, dtype=int))
    return dom, dom.extract_boundary()


def _octasphere_surface(level: int):
    """Subdivided octahedron with vertices projected onto the unit sphere."""
    verts = [np.array(p, float) for p in
             [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    tris = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
            (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    for _ in range(level):
        cache = {}
        new_tris = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for (a, b, c) in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new_tris
    return np.array(verts), np.array(tris, dtype=int)


def build_ball_mesh(level: int):
    """Unit ball: radial layers of tets under an octasphere surface.

    ``level`` quadrisections of the octahedron give 8 * 4^level surface
    triangles; 2^level radial layers keep the tets shape-regular.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > 4:
        raise ValueError("level > 4 exceeds the desk-scale size guard")
    sverts, stris = _octasphere_surface(level)
    nsurf = len(sverts)
    nlayers = 2 ** level
    radii = [(j + 1) / nlayers for j in range(nlayers)]  # innermost .. 1.0
    vertices = [np.zeros(3)]
    layer_offset = []
    for r in radii:
        layer_offset.append(len(vertices))
        vertices.extend(r * sverts)
    vertices = np.array(vertices)

    tets = []
    # innermost layer: cones to the center
    off = layer_offset[0]
    for (a, b, c) in stris:
        tets.append((0, off + a, off + b, off + c))
    # shells: split each prism into 3 tets; quad faces are cut along the
    # diagonal through their smallest vertex, which matches across prisms
    for j in range(1, nlayers):
        lo, hi = layer_offset[j - 1], layer_offset[j]
        for tri in stris:
            loc = list(tri)
            s = int(np.argmin(loc))
            a, b, c = loc[s:] + loc[:s]    # a = smallest surface index
            if b < c:
                tets.append((lo + a, lo + b, lo + c, hi + c))
                tets.append((lo + a, lo + b, hi + c, hi + b))
                tets.append((lo + a, hi + b, hi + c, hi + a))
            else:
                tets.append((lo + a, lo + b, lo + c, hi + b))
                tets.append((lo + a, hi + b, lo + c, hi + c))
                tets.append((lo + a, hi + b, hi + c, hi + a))
    tets = np.array(tets, dtype=int)
    # fix orientation tet by tet
    v = vertices[tets]
    dets = np.linalg.det(v[:, 1:] - v[:, :1])
    swap = np.nonzero(dets < 0)[0]
    tets[swap, 1], tets[swap, 2] = tets[swap, 2].copy(), tets[swap, 1].copy()
    dom = DomainMesh(vertices, tets)
    return dom, dom.extract_boundary()


# ---------------------------------------------------------------------------
# plain-text mesh format: "bdiemesh 1"


def save_mesh(path, dom: DomainMesh, bnd: BoundaryMesh):
    with open(path, "w") as fh:
        fh.write("bdiemesh 1\n")
        fh.write(f"vertices {len(dom.vertices)}\n")
        for p in dom.vertices:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"tets {len(dom.tets)}\n")
        for t in dom.tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"tris {len(bnd.triangles)}\n")
        for t in bnd.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def load_mesh(path):
    with open(path) as fh:
        lines = fh.read().splitlines()

    ln = 0

    def next_line():
        nonlocal ln
        if ln >= len(lines):
            raise MeshParseError("unexpected end of file", ln + 1)
        ln += 1
        return lines[ln - 1]

    header = next_line().split()
    if header != ["bdiemesh", "1"]:
        raise MeshParseError("expected header 'bdiemesh 1'", 1)

    def read_block(tag, width, conv):
        head = next_line().split()
        if len(head) != 2 or head[0] != tag:
            raise MeshParseError(f"expected '{tag} N'", ln)
        try:
            count = int(head[1])
        except ValueError:
            raise MeshParseError(f"bad count in '{tag}' header", ln) from None
        rows = []
        for _ in range(count):
            parts = next_line().split()
            if len(parts) != width:
                raise MeshParseError(f"expected {width} fields", ln)
            try:
                rows.append([conv(p) for p in parts])
            except ValueError:
                raise MeshParseError("malformed number", ln) from None
        return rows

    verts = np.array(read_block("vertices", 3, float))
    tets = np.array(read_block("tets", 4, int))
    tris = np.array(read_block("tris", 3, int))
    if np.any(tets < 0) or np.any(tets >= len(verts)):
        raise MeshParseError("tet index out of range", ln)
    if np.any(tris < 0) or np.any(tris >= len(verts)):
        raise MeshParseError("triangle index out of range", ln)
    dom = DomainMesh(verts, tets)
    bnd = BoundaryMesh(verts, tris)
    bnd.check_watertight()
    return dom, bnd


def build_mesh(shape: str, level: int):
    """Dispatch on canonical shape name ('cube' or 'ball')."""
    if shape == "cube":
        return build_cube_mesh(level)
    if shape == "ball":
        return build_ball_mesh(level)
    raise ValueError(f"unknown shape {shape!r}")
