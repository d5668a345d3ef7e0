"""Bilinear quadrilateral meshes, quadrature rules, and benchmark specimens.

Meshes are plain node/element arrays plus named Dirichlet sets carrying
per-component prescribed-displacement flags.  The three benchmark
generators build structured, locally refined meshes:

* ``sen_tension``  -- 1 x 1 mm square, mid-height slit from the left edge to
  the center, bottom edge fully fixed, top edge driven vertically;
* ``sen_shear``    -- same specimen, bottom fixed, side edges and top
  restrained vertically, top driven horizontally;
* ``asym_notch``   -- 18 x 50 mm strip with two offset semicircular edge
  notches, bottom fixed, top driven vertically.

The slit is a true geometric cut (duplicated nodes along the notch faces);
the circular notches are carved from the structured grid by removing
elements whose centroid falls inside the notch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fracip.errors import DegenerateElement, DimensionMismatch, InvalidRefinement

__all__ = [
    "QuadratureRule",
    "ShapeEval",
    "DirichletSet",
    "Mesh",
    "gauss_rule",
    "nodal_rule",
    "reduced_rule",
    "shape_functions",
    "shape_eval",
    "b_vector",
    "rectangle_mesh",
    "select_nodes",
    "generate_benchmark",
]

# reference-square corner coordinates, counter-clockwise
CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

_GEOM_TOL = 1e-9


@dataclass(frozen=True)
class QuadratureRule:
    """Integration points (xi, eta) on [-1, 1]^2 with weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.weights)


def gauss_rule(order: int = 2) -> QuadratureRule:
    """Tensor-product Gauss rule (only the 2x2 rule is used here)."""
    if order != 2:
        raise ValueError("only the 2x2 Gauss rule is supported")
    a = 1.0 / np.sqrt(3.0)
    pts = np.array([[-a, -a], [a, -a], [a, a], [-a, a]])
    return QuadratureRule(pts, np.ones(4))


def nodal_rule() -> QuadratureRule:
    """Quadrature at the element corners (weight 1 each)."""
    return QuadratureRule(CORNERS.copy(), np.ones(4))


def reduced_rule() -> QuadratureRule:
    """Single-point rule at the element center (weight 4)."""
    return QuadratureRule(np.zeros((1, 2)), np.array([4.0]))


@dataclass(frozen=True)
class ShapeEval:
    """Shape values, physical gradients and Jacobian determinant at one point."""

    N: np.ndarray
    dN_dx: np.ndarray
    detJ: float


def shape_functions(xi: float, eta: float):
    """Reference shape values (4,) and reference gradients (4, 2)."""
    n = 0.25 * (1.0 + CORNERS[:, 0] * xi) * (1.0 + CORNERS[:, 1] * eta)
    dn = np.empty((4, 2))
    dn[:, 0] = 0.25 * CORNERS[:, 0] * (1.0 + CORNERS[:, 1] * eta)
    dn[:, 1] = 0.25 * CORNERS[:, 1] * (1.0 + CORNERS[:, 0] * xi)
    return n, dn


def shape_eval(element_coords, ref_point) -> ShapeEval:
    """Evaluate the bilinear map of one element at a reference point."""
    coords = np.asarray(element_coords, dtype=float)
    if coords.shape != (4, 2):
        raise DimensionMismatch("element_coords must be 4x2")
    n, dn = shape_functions(*ref_point)
    jac = dn.T @ coords
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise DegenerateElement(f"non-positive Jacobian determinant {det}")
    dn_dx = dn @ np.linalg.inv(jac).T
    return ShapeEval(n, dn_dx, float(det))


def b_vector(e: ShapeEval) -> np.ndarray:
    """Engineering-strain operator (4 x 8): rows (xx, yy, zz, gamma_xy).

    The zz row is identically zero; the out-of-plane component is carried
    in the strain vector because deviatoric plastic flow populates it.
    """
    b = np.zeros((4, 8))
    b[0, 0::2] = e.dN_dx[:, 0]
    b[1, 1::2] = e.dN_dx[:, 1]
    b[3, 0::2] = e.dN_dx[:, 1]
    b[3, 1::2] = e.dN_dx[:, 0]
    return b


@dataclass
class DirichletSet:
    """Named node set with per-component prescribed-displacement flags."""

    nodes: np.ndarray
    fix_x: bool
    fix_y: bool


@dataclass
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    dirichlet_sets: dict[str, DirichletSet] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_dof(self) -> int:
        return 2 * self.n_nodes

    def element_coords(self, e: int) -> np.ndarray:
        return self.nodes[self.elements[e]]

    def validate(self) -> None:
        """Check index ranges and positive Jacobians at all Gauss points."""
        if self.elements.size and self.elements.max() >= self.n_nodes:
            raise DimensionMismatch("element references missing node")
        rule = gauss_rule(2)
        for e in range(self.n_elements):
            coords = self.element_coords(e)
            for pt in rule.points:
                shape_eval(coords, pt)

    def add_dirichlet_set(self, name: str, nodes, fix_x: bool, fix_y: bool) -> None:
        self.dirichlet_sets[name] = DirichletSet(
            np.asarray(nodes, dtype=np.int64), bool(fix_x), bool(fix_y)
        )

    # -- plain-text exchange -------------------------------------------------
    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("fracip-mesh 1\n")
            fh.write(f"nodes {self.n_nodes}\n")
            for x, y in self.nodes:
                fh.write(f"{x!r} {y!r}\n")
            fh.write(f"elements {self.n_elements}\n")
            for el in self.elements:
                fh.write(" ".join(str(int(i)) for i in el) + "\n")
            for name, ds in self.dirichlet_sets.items():
                fh.write(f"nset {name} {int(ds.fix_x)} {int(ds.fix_y)} {len(ds.nodes)}\n")
                fh.write(" ".join(str(int(i)) for i in ds.nodes) + "\n")

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            tokens = fh.read().split()
        it = iter(tokens)
        magic, version = next(it), next(it)
        if magic != "fracip-mesh":
            raise ValueError(f"not a fracip mesh file (got {magic!r})")
        if next(it) != "nodes":
            raise ValueError("expected 'nodes' section")
        n = int(next(it))
        nodes = np.array([[float(next(it)), float(next(it))] for _ in range(n)])
        if next(it) != "elements":
            raise ValueError("expected 'elements' section")
        m = int(next(it))
        elements = np.array(
            [[int(next(it)) for _ in range(4)] for _ in range(m)], dtype=np.int64
        )
        mesh = cls(nodes, elements)
        for tok in it:
            if tok != "nset":
                raise ValueError(f"unexpected token {tok!r}")
            name = next(it)
            fix_x, fix_y, count = int(next(it)), int(next(it)), int(next(it))
            ids = [int(next(it)) for _ in range(count)]
            mesh.add_dirichlet_set(name, ids, bool(fix_x), bool(fix_y))
        return mesh


def select_nodes(mesh: Mesh, predicate) -> np.ndarray:
    """Node ids whose coordinates satisfy ``predicate(x, y)``."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    return np.nonzero(predicate(x, y))[0]


def rectangle_mesh(xs, ys) -> Mesh:
    """Tensor-product quad mesh from sorted coordinate arrays."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs), len(ys)
    xx, yy = np.meshgrid(xs, ys)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    elements = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            n0 = j * nx + i
            elements.append([n0, n0 + 1, n0 + 1 + nx, n0 + nx])
    return Mesh(nodes, np.asarray(elements, dtype=np.int64))


def _segment(a: float, b: float, h: float) -> np.ndarray:
    """Uniform points covering [a, b] with spacing <= h, endpoints exact."""
    n = max(1, int(np.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _graded_axis(a, b, fine_a, fine_b, h_fine, h_coarse, growth=1.4, anchors=()):
    """Coordinates on [a, b]: spacing h_fine on [fine_a, fine_b], growing
    geometrically to at most h_coarse outside.  ``anchors`` inside the fine
    window become exact grid points."""
    if not (a <= fine_a < fine_b <= b):
        raise InvalidRefinement("fine window must lie inside the axis range")
    marks = sorted({fine_a, fine_b, *[p for p in anchors if fine_a < p < fine_b]})
    fine = [np.array([fine_a])]
    for lo, hi in zip(marks[:-1], marks[1:]):
        fine.append(_segment(lo, hi, h_fine)[1:])
    pts = list(np.concatenate(fine))

    x, h = pts[0], h_fine
    left = []
    while x > a + _GEOM_TOL:
        h = min(h * growth, h_coarse)
        x = a if x - h < a + h * 0.5 else x - h
        left.append(x)
    x, h = pts[-1], h_fine
    right = []
    while x < b - _GEOM_TOL:
        h = min(h * growth, h_coarse)
        x = b if x + h > b - h * 0.5 else x + h
        right.append(x)
    return np.array(left[::-1] + pts + right)


def _cut_slit(mesh: Mesh, y_cut: float, x_max: float) -> Mesh:
    """Duplicate nodes on the line y == y_cut for x < x_max and reattach the
    elements above the line to the copies, producing a free slit."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    slit = np.nonzero((np.abs(y - y_cut) < _GEOM_TOL) & (x < x_max - _GEOM_TOL))[0]
    if slit.size == 0:
        raise InvalidRefinement("slit line not resolved by the grid")
    nodes = list(mesh.nodes)
    twin = {}
    for nid in slit:
        twin[int(nid)] = len(nodes)
        nodes.append(mesh.nodes[nid].copy())
    elements = mesh.elements.copy()
    centroids_y = mesh.nodes[mesh.elements, 1].mean(axis=1)
    for e in np.nonzero(centroids_y > y_cut)[0]:
        for k in range(4):
            elements[e, k] = twin.get(int(elements[e, k]), elements[e, k])
    return Mesh(np.asarray(nodes), elements)


def _sen_mesh(h_c: float, shear: bool) -> Mesh:
    """Single-edge notched 1 x 1 mm square with a slit from (0, 0.5) to (0.5, 0.5)."""
    size, y_notch, x_tip = 1.0, 0.5, 0.5
    if not 0.0 < h_c < 0.25 * size:
        raise InvalidRefinement(f"h_c = {h_c} does not fit the specimen")
    h_coarse = min(16.0 * h_c, 0.08)
    if shear:
        # crack propagates from the tip downwards through the right half
        xs = _graded_axis(0, size, 0.38, size, h_c, h_coarse, anchors=(x_tip,))
        ys = _graded_axis(0, size, 0.0, y_notch + max(4 * h_c, 0.05), h_c, h_coarse, anchors=(y_notch,))
    else:
        band = max(6.0 * h_c, 0.075)
        xs = _graded_axis(0, size, 0.35, size, h_c, h_coarse, anchors=(x_tip,))
        ys = _graded_axis(
            0, size, y_notch - band, y_notch + band, h_c, h_coarse, anchors=(y_notch,)
        )
    mesh = rectangle_mesh(xs, ys)
    mesh = _cut_slit(mesh, y_notch, x_tip)

    bottom = select_nodes(mesh, lambda x, y: np.abs(y) < _GEOM_TOL)
    top = select_nodes(mesh, lambda x, y: np.abs(y - size) < _GEOM_TOL)
    mesh.add_dirichlet_set("bottom", bottom, True, True)
    if shear:
        left = select_nodes(
            mesh, lambda x, y: (np.abs(x) < _GEOM_TOL) & (y > _GEOM_TOL) & (y < size - _GEOM_TOL)
        )
        right = select_nodes(
            mesh,
            lambda x, y: (np.abs(x - size) < _GEOM_TOL) & (y > _GEOM_TOL) & (y < size - _GEOM_TOL),
        )
        mesh.add_dirichlet_set("top", top, True, True)
        mesh.add_dirichlet_set("left", left, False, True)
        mesh.add_dirichlet_set("right", right, False, True)
    else:
        mesh.add_dirichlet_set("top", top, False, True)
    return mesh


def _asym_notch_mesh(h_c: float) -> Mesh:
    """Asymmetrically notched 18 x 50 mm strip, semicircular notches r = 2.5 mm
    at (0, 30) and (18, 20)."""
    width, height, radius = 18.0, 50.0, 2.5
    cl, cr = np.array([0.0, 30.0]), np.array([width, 20.0])
    if not 0.0 < h_c < radius:
        raise InvalidRefinement(f"h_c = {h_c} does not fit the specimen")
    h_coarse = min(10.0 * h_c, 4.0)
    xs = _graded_axis(0, width, 0.0, width, h_c, h_coarse)
    ys = _graded_axis(0, height, 16.0, 34.0, h_c, h_coarse)
    mesh = rectangle_mesh(xs, ys)

    cent = mesh.nodes[mesh.elements].mean(axis=1)
    inside = (np.linalg.norm(cent - cl, axis=1) < radius) | (
        np.linalg.norm(cent - cr, axis=1) < radius
    )
    elements = mesh.elements[~inside]
    used = np.unique(elements)
    renum = -np.ones(mesh.n_nodes, dtype=np.int64)
    renum[used] = np.arange(len(used))
    mesh = Mesh(mesh.nodes[used], renum[elements])

    bottom = select_nodes(mesh, lambda x, y: np.abs(y) < _GEOM_TOL)
    top = select_nodes(mesh, lambda x, y: np.abs(y - height) < _GEOM_TOL)
    mesh.add_dirichlet_set("bottom", bottom, True, True)
    mesh.add_dirichlet_set("top", top, False, True)
    return mesh


def generate_benchmark(spec: str, target_h_critical: float) -> Mesh:
    """Build one of the three benchmark specimens.

    Parameters
    ----------
    spec : {"sen_tension", "sen_shear", "asym_notch"}
    target_h_critical : float
        Element size (mm) in the zone where the crack is expected.
    """
    if target_h_critical <= 0:
        raise InvalidRefinement("target_h_critical must be positive")
    if spec == "sen_tension":
        mesh = _sen_mesh(target_h_critical, shear=False)
    elif spec == "sen_shear":
        mesh = _sen_mesh(target_h_critical, shear=True)
    elif spec == "asym_notch":
        mesh = _asym_notch_mesh(target_h_critical)
    else:
        raise ValueError(f"unknown benchmark {spec!r}")
    mesh.validate()
    return mesh
