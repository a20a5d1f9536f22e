"""Quantization of a grayscale image into N intensity grades.

The intensity range [g_min, g_max] is split into N equal intervals of exact
rational width delta = (g_max - g_min) / N.  Grade n covers the left-open
interval (g_min + (n-1)*delta, g_min + n*delta]; g_min itself belongs to
grade 1.  All boundary arithmetic is integer-exact, so grade assignment
never depends on float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from lmwseg.image import GrayImage


class GradeRangeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GradeMap:
    """Per-pixel grade index in 1..n_grades (0 marks pixels outside the roi)."""

    grades: np.ndarray
    n_grades: int
    g_min: int
    g_max: int
    delta: Fraction
    degenerate: bool = False
    roi: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.grades)
        if g.ndim != 2:
            raise ValueError("grades must be 2-D")
        g = g.astype(np.int32, copy=True)
        g.setflags(write=False)
        object.__setattr__(self, "grades", g)
        if self.roi is not None:
            roi = np.asarray(self.roi, dtype=bool).copy()
            if roi.shape != g.shape:
                raise ValueError("roi shape must match grades shape")
            roi.setflags(write=False)
            object.__setattr__(self, "roi", roi)

    @property
    def width(self) -> int:
        return self.grades.shape[1]

    @property
    def height(self) -> int:
        return self.grades.shape[0]


def grade_of(g: int, g_min: int, delta: Fraction, n_grades: int) -> int:
    """Grade index of intensity g: clamp(ceil((g - g_min) / delta), 1, N)."""
    delta = Fraction(delta)
    if delta <= 0:
        raise GradeRangeError("delta must be positive (degenerate intensity range)")
    if n_grades < 1:
        raise GradeRangeError(f"n_grades must be >= 1, got {n_grades}")
    q = Fraction(g - g_min) / delta
    n = -((-q.numerator) // q.denominator)  # ceil of an exact rational
    return max(1, min(n_grades, n))


def _grade_array(pixels: np.ndarray, g_min: int, g_max: int, n_grades: int) -> np.ndarray:
    # ceil((g - g_min) * N / (g_max - g_min)) in integer arithmetic
    span = int(g_max) - int(g_min)
    q = (pixels.astype(np.int64) - g_min) * n_grades
    grades = -((-q) // span)
    return np.clip(grades, 1, n_grades).astype(np.int32)


def quantize(
    image: GrayImage,
    n_grades: int = 15,
    invert: bool = False,
    roi: np.ndarray | None = None,
) -> GradeMap:
    """Build the grade map of an image.

    ``invert`` reflects intensities (g -> g_min + g_max - g) before grading,
    turning dark-on-bright objects into the bright-on-dark case the method
    expects.  ``roi`` restricts both the intensity extrema and the graded
    pixels; everything outside gets grade 0 and is ignored downstream.

    A constant image (g_min == g_max) yields a degenerate map with every
    pixel in grade 1.
    """
    if n_grades < 1:
        raise GradeRangeError(f"n_grades must be >= 1, got {n_grades}")
    px = image.pixels
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        if roi.shape != px.shape:
            raise ValueError("roi shape must match image shape")
        if not roi.any():
            raise ValueError("roi is empty")
        inside = px[roi]
        g_min, g_max = int(inside.min()), int(inside.max())
    else:
        g_min, g_max = int(px.min()), int(px.max())

    if g_min == g_max:
        grades = np.zeros(px.shape, dtype=np.int32)
        grades[roi if roi is not None else slice(None)] = 1
        return GradeMap(grades, n_grades, g_min, g_max, Fraction(0), degenerate=True, roi=roi)

    work = (g_min + g_max) - px if invert else px
    grades = _grade_array(work, g_min, g_max, n_grades)
    if roi is not None:
        grades = np.where(roi, grades, 0)
    delta = Fraction(g_max - g_min, n_grades)
    return GradeMap(grades, n_grades, g_min, g_max, delta, degenerate=False, roi=roi)


def grades_to_image(grade_map: GradeMap) -> GrayImage:
    """Debug view of grade indices as a 16-bit image."""
    return GrayImage(grade_map.grades.astype(np.int32), maxval=65535)
