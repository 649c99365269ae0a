"""Layered cell geometry: anode | separator | cathode on a 1D cell-centered grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ANODE, SEPARATOR, CATHODE = 0, 1, 2
REGION_NAMES = {ANODE: "anode", SEPARATOR: "separator", CATHODE: "cathode"}
_REGION_CODES = {
    "anode": ANODE,
    "a": ANODE,
    "separator": SEPARATOR,
    "s": SEPARATOR,
    "cathode": CATHODE,
    "c": CATHODE,
}
# shorthands accepted by region_integral
_REGION_SETS = {
    "omega": (ANODE, SEPARATOR, CATHODE),
    "all": (ANODE, SEPARATOR, CATHODE),
    "electrodes": (ANODE, CATHODE),
    "omega_prime": (ANODE, CATHODE),
}


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DomainLayout:
    """Layer lengths of the cell, left to right."""

    anode: float
    separator: float
    cathode: float

    def __post_init__(self):
        for name in ("anode", "separator", "cathode"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise GeometryError(f"layer length {name}={value!r} must be positive")

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.anode, self.separator, self.cathode)

    @property
    def total(self) -> float:
        return self.anode + self.separator + self.cathode


def check_separator_condition(layout: DomainLayout) -> bool:
    """True iff the separator is strictly thinner than both electrodes together."""
    return layout.separator < layout.anode + layout.cathode


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell-centered 1D mesh.

    ``faces`` holds the n+1 face positions; cell i spans ``faces[i]..faces[i+1]``.
    Face areas are 1 (unit cross-section), so volumes are lengths.
    """

    faces: np.ndarray
    tags: np.ndarray
    layout: DomainLayout
    centers: np.ndarray = field(init=False)
    volumes: np.ndarray = field(init=False)

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=float)
        tags = np.asarray(self.tags, dtype=np.int8)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "centers", 0.5 * (faces[1:] + faces[:-1]))
        object.__setattr__(self, "volumes", np.diff(faces))
        for arr in (self.faces, self.tags, self.centers, self.volumes):
            arr.flags.writeable = False
        if np.any(self.volumes <= 0):
            raise GeometryError("cell volumes must be positive")

    @property
    def n_cells(self) -> int:
        return self.volumes.size

    @property
    def electrode(self) -> np.ndarray:
        """Mask of cells in Omega' (anode or cathode)."""
        return self.tags != SEPARATOR

    @property
    def separator(self) -> np.ndarray:
        return self.tags == SEPARATOR

    def region_mask(self, regions) -> np.ndarray:
        codes = _region_codes(regions)
        return np.isin(self.tags, codes)

    def region_measure(self, regions) -> float:
        return float(np.sum(self.volumes[self.region_mask(regions)]))

    @property
    def interior_distances(self) -> tuple[np.ndarray, np.ndarray]:
        """Center-to-face distances (left cell, right cell) for each interior face."""
        left = self.faces[1:-1] - self.centers[:-1]
        right = self.centers[1:] - self.faces[1:-1]
        return left, right


def _region_codes(regions) -> tuple[int, ...]:
    if isinstance(regions, str):
        key = regions.lower()
        if key in _REGION_SETS:
            return _REGION_SETS[key]
        regions = [regions]
    codes = []
    for r in regions:
        if isinstance(r, str):
            try:
                codes.append(_REGION_CODES[r.lower()])
            except KeyError:
                raise GeometryError(f"unknown region {r!r}") from None
        else:
            if int(r) not in REGION_NAMES:
                raise GeometryError(f"unknown region code {r!r}")
            codes.append(int(r))
    return tuple(codes)


def build_layered_mesh(layout: DomainLayout, cells_per_layer) -> Mesh:
    """Uniformly subdivide each layer; layer interfaces always fall on faces."""
    counts = tuple(int(n) for n in cells_per_layer)
    if len(counts) != 3:
        raise GeometryError("cells_per_layer needs one count per layer")
    if any(n < 2 for n in counts):
        raise GeometryError(f"need at least 2 cells per layer, got {counts}")

    pieces = []
    start = 0.0
    for length, n in zip(layout.lengths, counts):
        end = start + length
        edges = np.linspace(start, end, n + 1)
        pieces.append(edges if not pieces else edges[1:])
        start = end
    faces = np.concatenate(pieces)
    tags = np.repeat([ANODE, SEPARATOR, CATHODE], counts)
    return Mesh(faces=faces, tags=tags, layout=layout)


def region_integral(mesh: Mesh, field, regions="omega") -> float:
    """Midpoint-rule integral of a cell field over a set of regions.

    Cells outside ``regions`` are ignored, so a field may carry NaN there
    (e.g. the solid potential in the separator).
    """
    values = np.asarray(field, dtype=float)
    if values.shape != (mesh.n_cells,):
        raise GeometryError(
            f"field has shape {values.shape}, mesh has {mesh.n_cells} cells"
        )
    mask = mesh.region_mask(regions)
    return float(np.dot(mesh.volumes[mask], values[mask]))
