"""Active element mesh over a trimmed domain.

Elements are classified interior / cut / exterior from vertex signs plus
boundary-arc presence; cut elements get volume fractions from the cut
quadrature, and the volume-ratio threshold splits active elements into good
and bad ones. Each bad element is assigned a fully interior good neighbor
found by searching expanding index rings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .bspline import TensorSplineSpace
from .geometry import TrimmedDomain, boundary_arcs_in_element
from .quadrature import cut_volume_rule

__all__ = ["ElementStatus", "MeshError", "TrimmedMesh", "build_mesh", "classify_good_bad", "good_neighbor"]

# Elements are demoted to exterior only when the cut rule finds no kept
# region at all. Positive slivers stay active however small: the spurious
# near-kernel pressure modes of the non-stabilized formulation live exactly
# there, and the diagnostics must be able to see them.
NEIGHBOR_RINGS = 3


class MeshError(RuntimeError):
    pass


class ElementStatus(enum.Enum):
    INTERIOR = "interior"
    CUT = "cut"
    EXTERIOR = "exterior"


@dataclass
class TrimmedMesh:
    """Classified Bezier mesh with per-element geometry and trimming data."""

    domain: TrimmedDomain
    space: TensorSplineSpace
    shape: tuple
    status: np.ndarray
    volume_frac: np.ndarray
    h_elem: np.ndarray
    boxes: np.ndarray          # physical boxes, shape (ne1, ne2, 2, 2)
    arcs: dict                 # (i,j) -> list of trimming BoundaryArc
    theta: float | None = None
    good: np.ndarray | None = None
    neighbors: dict = field(default_factory=dict)

    @property
    def h_max(self) -> float:
        active = self.status != ElementStatus.EXTERIOR
        return float(self.h_elem[active].max())

    def elements(self, status=None):
        ne1, ne2 = self.shape
        for i in range(ne1):
            for j in range(ne2):
                if status is None or self.status[i, j] == status:
                    yield (i, j)

    def active_elements(self):
        for e in self.elements():
            if self.status[e] != ElementStatus.EXTERIOR:
                yield e

    def is_bad(self, e) -> bool:
        return bool(self.good is not None and not self.good[e])

    @property
    def n_bad(self) -> int:
        if self.good is None:
            return 0
        active = self.status != ElementStatus.EXTERIOR
        return int(np.sum(active & ~self.good))

    def parametric_box(self, e) -> np.ndarray:
        return self.space.element_box(*e)

    def physical_box(self, e) -> np.ndarray:
        return self.boxes[e[0], e[1]]

    def center(self, e) -> np.ndarray:
        b = self.boxes[e[0], e[1]]
        return 0.5 * (b[:, 0] + b[:, 1])


def build_mesh(domain: TrimmedDomain, space: TensorSplineSpace, quad_order: int = 5) -> TrimmedMesh:
    """Classify elements against the trimmed domain and compute volume
    fractions; elements whose kept region has no positive measure are
    demoted to exterior."""
    ne1, ne2 = space.n_elements
    status = np.empty((ne1, ne2), dtype=object)
    frac = np.zeros((ne1, ne2))
    h_el = np.zeros((ne1, ne2))
    boxes = np.zeros((ne1, ne2, 2, 2))
    arcs = {}
    affine = domain.geo_map.is_affine

    for i in range(ne1):
        for j in range(ne2):
            pbox = space.element_box(i, j)
            if affine:
                corners_param = np.array(
                    [[pbox[0, a], pbox[1, b]] for a in range(2) for b in range(2)]
                )
                corners = np.array([domain.geo_map.forward(c) for c in corners_param])
                box = np.stack([corners.min(axis=0), corners.max(axis=0)], axis=1)
            else:
                box = pbox.copy()
            boxes[i, j] = box
            # element size = largest physical edge (knot-span image); the
            # shape-regular meshes here keep it within a constant of the
            # diameter, and the weak-form weights are calibrated to it
            h_el[i, j] = float(max(box[0, 1] - box[0, 0], box[1, 1] - box[1, 0]))
            if not domain.primitives:
                status[i, j] = ElementStatus.INTERIOR
                frac[i, j] = 1.0
                continue
            corners = np.array(
                [[box[0, a], box[1, b]] for a in range(2) for b in range(2)]
            )
            removed = domain.is_removed(corners)
            el_arcs = boundary_arcs_in_element(
                domain, box, element=(i, j), include_faces=False
            )
            if removed.all() and not el_arcs:
                status[i, j] = ElementStatus.EXTERIOR
                continue
            if not removed.any() and not el_arcs:
                status[i, j] = ElementStatus.INTERIOR
                frac[i, j] = 1.0
                continue
            area = cut_volume_rule(box, domain, quad_order, element=(i, j)).total
            f = min(max(area / ((box[0, 1] - box[0, 0]) * (box[1, 1] - box[1, 0])), 0.0), 1.0)
            if f <= 0.0:
                status[i, j] = ElementStatus.EXTERIOR
                continue
            if f >= 1.0 - 1e-14:  # grazed only within quadrature roundoff
                # grazed but not actually cut; keep its boundary arcs
                status[i, j] = ElementStatus.INTERIOR
                frac[i, j] = 1.0
                if el_arcs:
                    arcs[(i, j)] = el_arcs
                continue
            status[i, j] = ElementStatus.CUT
            frac[i, j] = f
            arcs[(i, j)] = el_arcs
    return TrimmedMesh(
        domain=domain,
        space=space,
        shape=(ne1, ne2),
        status=status,
        volume_frac=frac,
        h_elem=h_el,
        boxes=boxes,
        arcs=arcs,
    )


def classify_good_bad(mesh: TrimmedMesh, theta: float) -> TrimmedMesh:
    """Flag elements good (volume fraction >= theta) or bad, and assign a
    good neighbor to every bad element."""
    if not (0 < theta <= 1):
        raise MeshError(f"theta must be in (0, 1], got {theta}")
    ne1, ne2 = mesh.shape
    good = np.ones((ne1, ne2), dtype=bool)
    for e in mesh.active_elements():
        if mesh.status[e] == ElementStatus.CUT:
            good[e] = mesh.volume_frac[e] >= theta
    mesh.theta = theta
    mesh.good = good
    mesh.neighbors = {}
    for e in mesh.active_elements():
        if not good[e]:
            mesh.neighbors[e] = good_neighbor(mesh, e)
    return mesh


def good_neighbor(mesh: TrimmedMesh, e) -> tuple:
    """Nearest fully interior element within 3 index rings of a bad element;
    ties break toward the smaller row-major index."""
    ne1, ne2 = mesh.shape
    ci, cj = e
    center = mesh.center(e)
    for ring in range(1, NEIGHBOR_RINGS + 1):
        best = None
        for i in range(max(ci - ring, 0), min(ci + ring, ne1 - 1) + 1):
            for j in range(max(cj - ring, 0), min(cj + ring, ne2 - 1) + 1):
                if max(abs(i - ci), abs(j - cj)) != ring:
                    continue
                if mesh.status[i, j] != ElementStatus.INTERIOR:
                    continue
                d = float(np.linalg.norm(mesh.center((i, j)) - center))
                key = (d, i * ne2 + j)
                if best is None or key < best[0]:
                    best = (key, (i, j))
        if best is not None:
            return best[1]
    raise MeshError(
        f"no interior element within {NEIGHBOR_RINGS} rings of bad element {e}: "
        "mesh too coarse for stabilization"
    )
