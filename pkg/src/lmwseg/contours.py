"""Selection of locally minimal-width bands and their single-pixel contours.

A band is selected when its width is <= the width of every tree neighbor
(father and sons).  Zero-width virtual bands always qualify: they are the
ideal step edges.

Selected bands are shrunk to single-pixel closed curves by sequential
homotopic thinning: band pixels are deleted in row-major order, alternating
between the layer touching the exterior and the layer touching the
interior, and a pixel is deletable only if removing it neither disconnects
the band locally nor joins the interior to the exterior (the classical
simple-point test for an 8-connected curve over a 4-connected background).
Bands that enclose nothing keep their outer edge ring instead, thinned the
same way around the band's remaining core.  The result is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from lmwseg.bands import Band, BandTree, _STRUCT, _mask_from_runs
from lmwseg.image import LabelMap


@dataclass(frozen=True)
class LmwOptions:
    """Selection options: drop the root (the background) by default; with
    ``strict`` a band must also beat at least one neighbor outright."""

    exclude_root: bool = True
    strict: bool = False


@dataclass(frozen=True)
class Contour:
    """Ordered single-pixel boundary curve; points are (x, y) pairs."""

    band_id: int
    grade: int
    points: tuple
    closed: bool

    @property
    def point_set(self) -> frozenset:
        return frozenset(self.points)


def find_lmw_bands(tree: BandTree, options: LmwOptions = LmwOptions()) -> set[int]:
    """Bands whose width is <= every tree neighbor's width."""
    selected: set[int] = set()
    for band in tree.bands:
        if options.exclude_root and band.id == tree.root:
            continue
        widths = [tree.bands[n].width for n in tree.neighbors(band.id)]
        if not all(band.width <= wk for wk in widths):
            continue
        if options.strict and not any(band.width < wk for wk in widths):
            continue
        selected.add(band.id)
    return selected


# --- simple-point machinery -------------------------------------------------

_POS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
_EDGE_IDX = (1, 3, 4, 6)  # 4-neighbors of the center


def _components(cells: list[int], adjacency: list[list[int]]) -> list[set[int]]:
    comps = []
    left = set(cells)
    while left:
        seed = left.pop()
        comp = {seed}
        stack = [seed]
        while stack:
            for j in adjacency[stack.pop()]:
                if j in left:
                    left.remove(j)
                    comp.add(j)
                    stack.append(j)
        comps.append(comp)
    return comps


def _build_simple_lut() -> np.ndarray:
    """Deletability of the center pixel, indexed by the 8-neighbor pattern.

    Deletable iff the occupied neighbors form one 8-connected component and
    the empty neighbors 4-adjacent to the center form one 4-connected
    component: removal then changes neither object nor background topology.
    """
    adj8 = [
        [j for j in range(8) if j != i
         and abs(_POS[i][0] - _POS[j][0]) <= 1 and abs(_POS[i][1] - _POS[j][1]) <= 1]
        for i in range(8)
    ]
    adj4 = [
        [j for j in range(8)
         if abs(_POS[i][0] - _POS[j][0]) + abs(_POS[i][1] - _POS[j][1]) == 1]
        for i in range(8)
    ]
    lut = np.zeros(256, dtype=bool)
    for pat in range(256):
        obj = [i for i in range(8) if pat >> i & 1]
        if not obj or len(_components(obj, adj8)) != 1:
            continue
        bg = [i for i in range(8) if not pat >> i & 1]
        touching = [c for c in _components(bg, adj4) if any(i in _EDGE_IDX for i in c)]
        if len(touching) == 1:
            lut[pat] = True
    return lut


_SIMPLE_LUT = _build_simple_lut()


def _pattern(mask: np.ndarray, r: int, c: int) -> int:
    pat = 0
    for i, (dr, dc) in enumerate(_POS):
        if mask[r + dr, c + dc]:
            pat |= 1 << i
    return pat


def _delete_pixel(dom, ext, inte, r, c):
    dom[r, c] = False
    if ext[r - 1, c] or ext[r + 1, c] or ext[r, c - 1] or ext[r, c + 1]:
        ext[r, c] = True
    else:
        inte[r, c] = True


def _thin(
    domain: np.ndarray,
    exterior: np.ndarray,
    interior: np.ndarray,
    keep_fill: bool = False,
) -> np.ndarray:
    """Homotopic thinning of ``domain`` between ``exterior`` and ``interior``.

    The three masks partition the (already padded) crop.  Candidate pixels
    are scanned row-major, alternating the exterior-facing and the
    interior-facing layer, until nothing is deletable.

    With ``keep_fill`` a pixel is only deletable while it touches the
    interior side, so parts of the domain too thin to wrap anything are
    kept whole and the curve's flood fill still recovers them.
    """
    dom = domain.copy()
    ext = exterior.copy()
    inte = interior.copy()
    sides = [ext, inte] if inte.any() else [ext]
    lut = _SIMPLE_LUT

    def deletable(r: int, c: int) -> bool:
        if not dom[r, c] or not lut[_pattern(dom, r, c)]:
            return False
        return not keep_fill or bool(np.any(inte[r - 1 : r + 2, c - 1 : c + 2]))

    while True:
        deleted = False
        for side in sides:
            layer = dom & ndimage.binary_dilation(side, _STRUCT[8])
            rows, cols = np.nonzero(layer)
            for r, c in zip(rows.tolist(), cols.tolist()):
                if deletable(r, c):
                    _delete_pixel(dom, ext, inte, r, c)
                    deleted = True
        if not deleted:
            break
    # final sweep over all pixels catches redundant corner fillers; genuine
    # curve links are never simple, so the curve itself survives
    while True:
        deleted = False
        rows, cols = np.nonzero(dom)
        for r, c in zip(rows.tolist(), cols.tolist()):
            if deletable(r, c):
                _delete_pixel(dom, ext, inte, r, c)
                deleted = True
        if not deleted:
            break
    return dom


def _outline(region: np.ndarray, conn: int) -> np.ndarray:
    """Thin closed curve made of ``region`` pixels along its outer boundary.

    ``region`` must be padded by one exterior cell on every side.  The ring
    of region pixels touching the complement is thinned while the region's
    remaining core is protected like an interior; where the region is too
    thin to have a core the ring is kept whole so its fill still covers
    the region.
    """
    exterior = ~region
    ring = region & ndimage.binary_dilation(exterior, _STRUCT[conn])
    core = region & ~ring
    return _thin(ring, exterior, core, keep_fill=True)


_TRACE_ORDER = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _trace(cells: set) -> tuple[list, bool]:
    """Order curve cells ((r, c) pairs) by walking 8-adjacency."""
    degree = {}
    for p in cells:
        degree[p] = sum((p[0] + dr, p[1] + dc) in cells for dr, dc in _TRACE_ORDER)
    endpoints = sorted(p for p, d in degree.items() if d == 1)
    start = endpoints[0] if endpoints else min(cells)
    path = [start]
    visited = {start}
    cur = start
    while True:
        nxt = None
        for dr, dc in _TRACE_ORDER:
            q = (cur[0] + dr, cur[1] + dc)
            if q in cells and q not in visited:
                nxt = q
                break
        if nxt is None:
            break
        path.append(nxt)
        visited.add(nxt)
        cur = nxt
    closed = (
        len(path) == len(cells)
        and len(path) >= 4
        and max(abs(path[-1][0] - start[0]), abs(path[-1][1] - start[1])) == 1
    )
    while len(path) < len(cells):
        # stuck at a junction or pinch: resume next to the visited part
        rest = cells - visited
        resume = [p for p in sorted(rest)
                  if any((p[0] + dr, p[1] + dc) in visited for dr, dc in _TRACE_ORDER)]
        cur = resume[0] if resume else min(rest)
        path.append(cur)
        visited.add(cur)
        while True:
            nxt = None
            for dr, dc in _TRACE_ORDER:
                q = (cur[0] + dr, cur[1] + dc)
                if q in cells and q not in visited:
                    nxt = q
                    break
            if nxt is None:
                break
            path.append(nxt)
            visited.add(nxt)
            cur = nxt
        closed = False
    return path, closed


def _contour_from_mask(mask: np.ndarray, origin: tuple[int, int], band: Band) -> Contour:
    rows, cols = np.nonzero(mask)
    cells = {(int(r), int(c)) for r, c in zip(rows, cols)}
    path, closed = _trace(cells)
    points = tuple((c + origin[1], r + origin[0]) for r, c in path)
    return Contour(band_id=band.id, grade=band.grade, points=points, closed=closed)


def shrink_band(band: Band, tree: BandTree) -> list[Contour]:
    """Shrink a band to its single-pixel contour(s).

    A band that encloses holes is thinned down to one closed curve per
    hole; a band that encloses nothing contributes its outer edge ring; a
    virtual band contributes the boundary ring of the filled region of the
    real band below it.
    """
    conn = tree.connectivity
    real = tree.real_band(band.id)
    r0, c0, _, _ = real.bbox
    origin = (r0 - 1, c0 - 1)

    filled = np.pad(_mask_from_runs(real.pixel_runs + real.hole_runs, real.bbox), 1)
    if band.virtual:
        return [_contour_from_mask(_outline(filled, conn), origin, band)]

    band_mask = np.pad(_mask_from_runs(real.pixel_runs, real.bbox), 1)
    holes = filled & ~band_mask
    if not holes.any():
        return [_contour_from_mask(_outline(band_mask, conn), origin, band)]

    labeled, n_holes = ndimage.label(holes, structure=_STRUCT[8 if conn == 4 else 4])
    contours = []
    for i in range(1, n_holes + 1):
        hole = labeled == i
        exterior = ~band_mask & ~hole
        curve = _thin(band_mask, exterior, hole)
        contours.append(_contour_from_mask(curve, origin, band))
    return contours


def fill_contour(contour: Contour, width: int, height: int) -> LabelMap:
    """Binary mask of the pixels on or inside a closed contour.

    The inside is whatever a 4-connected flood from the border complement
    cannot reach.  Open contours are rejected.
    """
    if not contour.closed:
        raise ValueError(f"cannot fill open contour of band {contour.band_id}")
    mask = _fill_points(contour.points, width, height)
    return LabelMap(mask.astype(np.int32))


def _fill_points(points: Iterable[tuple[int, int]], width: int, height: int) -> np.ndarray:
    pts = [(y, x) for x, y in points]
    rows = [r for r, _ in pts]
    cols = [c for _, c in pts]
    if min(rows) < 0 or min(cols) < 0 or max(rows) >= height or max(cols) >= width:
        raise ValueError("contour exceeds image bounds")
    r0, r1 = max(min(rows) - 1, 0), min(max(rows) + 2, height)
    c0, c1 = max(min(cols) - 1, 0), min(max(cols) + 2, width)
    barrier = np.zeros((r1 - r0, c1 - c0), dtype=bool)
    for r, c in pts:
        barrier[r - r0, c - c0] = True
    labeled, _ = ndimage.label(~barrier, structure=_STRUCT[4])
    # every crop frame cell is either outside the contour's bounding box or
    # on the image border, hence exterior
    frame = np.unique(
        np.concatenate([labeled[0, :], labeled[-1, :], labeled[:, 0], labeled[:, -1]])
    )
    inside = ~np.isin(labeled, frame[frame > 0]) | barrier
    out = np.zeros((height, width), dtype=bool)
    out[r0:r1, c0:c1] = inside
    return out


def contours_to_json(contours: list[Contour]) -> list[dict]:
    return [
        {
            "band_id": c.band_id,
            "grade": c.grade,
            "closed": c.closed,
            "points": [[x, y] for x, y in c.points],
        }
        for c in contours
    ]
