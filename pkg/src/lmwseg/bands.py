"""Bands (connected same-grade regions), their enclosure tree, and widths.

Construction rules
------------------
* Bands are connected components of equal-grade pixels (4-connectivity by
  default).  Complement reachability, edge detection and hole filling use
  the dual connectivity (8 for 4-connected bands) so that closed bands
  enclose their interior in the Jordan-curve sense.
* A band's *filled region* is the band plus every pixel that cannot reach
  the image border (or the region-of-interest exterior) without crossing
  the band.
* The root is the band containing the lowest-grade border-adjacent pixel
  (ties: smallest row-major index).  Every other band's father is the band
  owning the majority of pixels adjacent to its filled region, provided
  that band actually encloses it; otherwise the immediate enclosing band,
  or the root when nothing encloses it.  The root plays the role of the
  unbounded background, so father links never form cycles.
* Wherever a father-son edge steps more than one grade, zero-width virtual
  bands are spliced in so every edge steps exactly one grade.  These stand
  for coinciding iso-lines, i.e. ideal step edges.

Band width is ``2 * n_b / n_e`` where ``n_b`` counts band pixels and
``n_e`` counts edge pixels with multiplicity: once if on the outer edge
(adjacent to the exterior of the filled region or to the border), once
more if on the inner edge (adjacent to an enclosed hole).  A one-pixel
thick ring therefore has width exactly 1, and a rasterized annulus with
radii r1 < r2 has width close to r2 - r1.  Widths are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

_STRUCT = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}
_OFFSETS = {
    4: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    8: ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)),
}
_DUAL = {4: 8, 8: 4}
# smallest band (in pixels) that can enclose anything under the dual adjacency
_MIN_ENCLOSING = {4: 8, 8: 4}


def band_width(n_b: int, n_e: int) -> Fraction:
    """Average band thickness 2*n_b/n_e as an exact rational; 0 for empty bands."""
    if n_b == 0:
        return Fraction(0)
    if n_e <= 0:
        raise ValueError(f"band with {n_b} pixels has no edge pixels")
    return Fraction(2 * n_b, n_e)


@dataclass
class Band:
    """One node of the band tree.  Treated as immutable once the tree is built.

    ``pixel_runs`` is the run-length encoding of the band's pixels as
    (row, col_start, col_stop) with exclusive stop; virtual bands own no
    pixels.  ``hole_runs`` encodes the enclosed complement (the filled
    region minus the band itself).
    """

    id: int
    grade: int
    pixel_runs: tuple = ()
    n_b: int = 0
    n_e: int = 0
    width: Fraction = Fraction(0)
    father: int | None = None
    sons: tuple = ()
    virtual: bool = False
    bbox: tuple | None = None  # (r0, c0, r1, c1), exclusive ends
    hole_runs: tuple = ()


def _mask_from_runs(runs, bbox) -> np.ndarray:
    r0, c0, r1, c1 = bbox
    m = np.zeros((r1 - r0, c1 - c0), dtype=bool)
    for r, s, e in runs:
        m[r - r0, s - c0 : e - c0] = True
    return m


def _boundary_count(region: np.ndarray, dual: int) -> int:
    """Pixels of ``region`` adjacent (dual connectivity) to its complement.

    Cells beyond the crop count as exterior, which makes the image border
    part of the outer edge.
    """
    padded = np.pad(region, 1)
    outside = ndimage.binary_dilation(~padded, _STRUCT[dual])
    return int(np.count_nonzero(region & outside[1:-1, 1:-1]))


@dataclass
class BandTree:
    bands: list
    root: int
    pixel_owner: np.ndarray
    connectivity: int = 4
    roi: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixel_owner.shape

    def neighbors(self, band_id: int) -> list[int]:
        band = self.bands[band_id]
        out = [] if band.father is None else [band.father]
        out.extend(band.sons)
        return out

    def real_band(self, band_id: int) -> Band:
        """The band itself, or for a virtual band the real band below it."""
        band = self.bands[band_id]
        while band.virtual:
            band = self.bands[band.sons[0]]
        return band

    def band_mask(self, band_id: int) -> tuple[np.ndarray, tuple[int, int]]:
        band = self.real_band(band_id)
        r0, c0, r1, c1 = band.bbox
        return _mask_from_runs(band.pixel_runs, band.bbox), (r0, c0)

    def filled_mask(self, band_id: int) -> tuple[np.ndarray, tuple[int, int]]:
        """Band plus enclosed holes, cropped to the band's bounding box."""
        band = self.real_band(band_id)
        mask = _mask_from_runs(band.pixel_runs + band.hole_runs, band.bbox)
        return mask, (band.bbox[0], band.bbox[1])

    def to_json_nodes(self) -> list[dict]:
        nodes = []
        for band in self.bands:
            nodes.append(
                {
                    "id": band.id,
                    "grade": band.grade,
                    "n_B": band.n_b,
                    "n_E": band.n_e,
                    "width": float(band.width),
                    "virtual": band.virtual,
                    "father": band.father,
                    "sons": list(band.sons),
                }
            )
        return nodes


def _label_bands(grades: np.ndarray, n_grades: int, struct) -> tuple[np.ndarray, list[int]]:
    """Connected components per grade; returns owner map and per-band grade."""
    owner = np.full(grades.shape, -1, dtype=np.int32)
    band_grade: list[int] = []
    for g in range(1, n_grades + 1):
        mask = grades == g
        if not mask.any():
            continue
        labeled, count = ndimage.label(mask, structure=struct)
        owner[mask] = labeled[mask] + len(band_grade) - 1
        band_grade.extend([g] * count)
    return owner, band_grade


def _runs_by_band(owner: np.ndarray, n_bands: int) -> list[list[tuple[int, int, int]]]:
    runs: list[list[tuple[int, int, int]]] = [[] for _ in range(n_bands)]
    h, w = owner.shape
    for r in range(h):
        row = owner[r]
        cuts = np.flatnonzero(row[1:] != row[:-1]) + 1
        starts = np.concatenate(([0], cuts))
        stops = np.concatenate((cuts, [w]))
        for s, e in zip(starts.tolist(), stops.tolist()):
            v = int(row[s])
            if v >= 0:
                runs[v].append((r, s, e))
    return runs


def _majority_from_counts(counts: np.ndarray, band_grade: list[int]) -> int:
    best = -1
    best_key = None
    for cand in np.flatnonzero(counts):
        key = (-int(counts[cand]), band_grade[cand], int(cand))
        if best_key is None or key < best_key:
            best, best_key = int(cand), key
    return best


def build_band_tree(grade_map, connectivity: int = 4) -> BandTree:
    """Build the band enclosure tree of a grade map.

    Works on the full image or, when the grade map carries a region of
    interest, on that region alone (pixels outside behave like the image
    exterior).  A degenerate grade map yields a single-root tree.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    conn = connectivity
    dual = _DUAL[conn]
    grades = grade_map.grades
    h, w = grades.shape

    owner, band_grade = _label_bands(grades, grade_map.n_grades, _STRUCT[conn])
    n_real = len(band_grade)
    if n_real == 0:
        raise ValueError("grade map has no graded pixels")

    flat_owner = owner.ravel()
    valid = flat_owner >= 0
    n_b = np.bincount(flat_owner[valid], minlength=n_real).astype(np.int64)

    first_pixel = np.full(n_real, h * w, dtype=np.int64)
    np.minimum.at(first_pixel, flat_owner[valid], np.flatnonzero(valid))

    label_img = (owner + 1).astype(np.int32)
    slices = ndimage.find_objects(label_img, max_label=n_real)

    # --- global dual-adjacency edge map (exact for bands without holes) ---
    padded = np.full((h + 2, w + 2), -2, dtype=np.int32)
    padded[1:-1, 1:-1] = owner
    edge = np.zeros((h, w), dtype=bool)
    border = np.zeros((h, w), dtype=bool)
    for dy, dx in _OFFSETS[dual]:
        nb = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        edge |= owner != nb
        border |= nb < 0
    edge_valid = edge & (owner >= 0)
    outer_counts = np.bincount(owner[edge_valid], minlength=n_real).astype(np.int64)

    # --- root: lowest grade among border-adjacent pixels, first in raster order
    border_valid = border & (owner >= 0)
    if not border_valid.any():
        raise ValueError("region of interest has no border-adjacent pixels")
    bg = np.where(border_valid, grades, np.iinfo(np.int32).max)
    min_grade = int(bg.min())
    root = int(owner.ravel()[int(np.flatnonzero((bg == min_grade).ravel())[0])])

    # --- ring majority for every band, assuming filled region == band ------
    # (exact unless the band has holes; those are recomputed below)
    pair_band: list[np.ndarray] = []
    pair_pix: list[np.ndarray] = []
    for dy, dx in _OFFSETS[conn]:
        nb = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        sel = (owner >= 0) & (nb >= 0) & (owner != nb)
        rows, cols = np.nonzero(sel)
        pair_band.append(owner[sel].astype(np.int64))
        pair_pix.append((rows + dy).astype(np.int64) * w + (cols + dx))
    majority = np.full(n_real, -1, dtype=np.int64)
    if pair_band:
        bands_arr = np.concatenate(pair_band)
        pix_arr = np.concatenate(pair_pix)
        if bands_arr.size:
            uniq = np.unique(bands_arr * (h * w) + pix_arr)
            ub = uniq // (h * w)
            upix = uniq % (h * w)
            cand = flat_owner[upix].astype(np.int64)
            key2, counts = np.unique(ub * n_real + cand, return_counts=True)
            kb = key2 // n_real
            kc = key2 % n_real
            grade_arr = np.array(band_grade, dtype=np.int64)
            order = np.lexsort((kc, grade_arr[kc], -counts, kb))
            first = np.unique(kb[order], return_index=True)[1]
            majority[kb[order][first]] = kc[order][first]

    # --- per-band hole analysis (only bands big enough to enclose) --------
    hole_runs: dict[int, tuple] = {}
    filled_area = n_b.copy()
    inner_counts = np.zeros(n_real, dtype=np.int64)
    outer_override: dict[int, int] = {}
    enclosing = [
        b for b in range(n_real) if n_b[b] >= _MIN_ENCLOSING[conn] and slices[b] is not None
    ]
    for b in enclosing:
        sl = slices[b]
        r0, r1 = max(sl[0].start - 1, 0), min(sl[0].stop + 1, h)
        c0, c1 = max(sl[1].start - 1, 0), min(sl[1].stop + 1, w)
        crop = owner[r0:r1, c0:c1]
        band_mask = crop == b
        comp = ~band_mask
        labeled, n_comp = ndimage.label(comp, structure=_STRUCT[dual])
        if n_comp == 0:
            continue
        ext_ids = np.unique(
            np.concatenate(
                [labeled[0, :], labeled[-1, :], labeled[:, 0], labeled[:, -1], labeled[crop < 0]]
            )
        )
        holes = comp & ~np.isin(labeled, ext_ids)
        if not holes.any():
            continue
        filled = band_mask | holes
        filled_area[b] = int(filled.sum())
        pad_f = np.pad(filled, 1)
        exterior_touch = ndimage.binary_dilation(~pad_f, _STRUCT[dual])[1:-1, 1:-1]
        pad_h = np.pad(holes, 1)
        interior_touch = ndimage.binary_dilation(pad_h, _STRUCT[dual])[1:-1, 1:-1]
        outer_override[b] = int(np.count_nonzero(band_mask & exterior_touch))
        inner_counts[b] = int(np.count_nonzero(band_mask & interior_touch))
        # ring majority over the filled region, not the band alone
        ring = ndimage.binary_dilation(filled, _STRUCT[conn]) & ~filled & (crop >= 0)
        counts = np.bincount(crop[ring], minlength=n_real) if ring.any() else np.zeros(n_real, int)
        majority[b] = _majority_from_counts(counts, band_grade)
        rows, cols = np.nonzero(holes)
        runs = []
        for r in np.unique(rows):
            cs = cols[rows == r]
            cuts = np.flatnonzero(np.diff(cs) > 1) + 1
            for seg in np.split(cs, cuts):
                runs.append((int(r) + r0, int(seg[0]) + c0, int(seg[-1]) + c0 + 1))
        hole_runs[b] = tuple(runs)

    # --- immediate surrounders: paint holes, largest filled region first --
    sur_pixel = np.full(h * w, -1, dtype=np.int64)
    for b in sorted(hole_runs, key=lambda b: -filled_area[b]):
        for r, s, e in hole_runs[b]:
            sur_pixel[r * w + s : r * w + e] = b
    sur = sur_pixel[first_pixel]

    def _in_sur_chain(b: int, target: int) -> bool:
        cur = int(sur[b])
        while cur != -1:
            if cur == target:
                return True
            cur = int(sur[cur])
        return False

    fathers: list[int | None] = [None] * n_real
    for b in range(n_real):
        if b == root:
            continue
        m = int(majority[b])
        if m >= 0 and _in_sur_chain(b, m):
            fathers[b] = m
        elif sur[b] != -1:
            fathers[b] = int(sur[b])
        else:
            fathers[b] = root

    # --- assemble real bands ----------------------------------------------
    all_runs = _runs_by_band(owner, n_real)
    bands: list[Band] = []
    for b in range(n_real):
        sl = slices[b]
        bbox = (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)
        outer = outer_override.get(b, int(outer_counts[b]))
        n_e = outer + int(inner_counts[b])
        bands.append(
            Band(
                id=b,
                grade=band_grade[b],
                pixel_runs=tuple(all_runs[b]),
                n_b=int(n_b[b]),
                n_e=n_e,
                width=band_width(int(n_b[b]), n_e),
                father=fathers[b],
                virtual=False,
                bbox=bbox,
                hole_runs=hole_runs.get(b, ()),
            )
        )

    # --- splice virtual zero-width bands so every edge steps one grade ----
    for b in range(n_real):
        father = bands[b].father
        if father is None:
            continue
        gap = bands[b].grade - bands[father].grade
        if abs(gap) == 1:
            continue
        if gap == 0:
            # nested same-grade regions: the collapsed iso-structure between
            # them is represented by a single zero-width band one grade up
            chain_grades = [bands[b].grade + 1]
        else:
            step = 1 if gap > 0 else -1
            chain_grades = list(range(bands[father].grade + step, bands[b].grade, step))
        son_filled = _mask_from_runs(bands[b].pixel_runs + bands[b].hole_runs, bands[b].bbox)
        n_e_virtual = 2 * _boundary_count(son_filled, dual)
        prev = father
        for g in chain_grades:
            v = Band(
                id=len(bands),
                grade=g,
                n_e=n_e_virtual,
                width=Fraction(0),
                father=prev,
                virtual=True,
            )
            bands.append(v)
            prev = v.id
        bands[b].father = prev

    sons: list[list[int]] = [[] for _ in bands]
    for band in bands:
        if band.father is not None:
            sons[band.father].append(band.id)
    for band in bands:
        band.sons = tuple(sons[band.id])

    return BandTree(bands=bands, root=root, pixel_owner=owner, connectivity=conn, roi=grade_map.roi)
