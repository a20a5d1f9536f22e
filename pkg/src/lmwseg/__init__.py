"""Segmentation of bright objects on dark background via minimal-width grade bands.

The pipeline quantizes a grayscale image into N intensity grades, groups
same-grade pixels into connected bands, organizes bands into an enclosure
tree, selects bands whose average thickness is locally minimal among tree
neighbors, and thins each selected band to a single-pixel closed contour.
"""

from lmwseg.image import GrayImage, LabelMap, load_pgm, save_pgm
from lmwseg.phantoms import PhantomSpec, make_phantom
from lmwseg.grades import GradeMap, grade_of, quantize
from lmwseg.bands import Band, BandTree, band_width, build_band_tree
from lmwseg.contours import Contour, LmwOptions, find_lmw_bands, shrink_band, fill_contour
from lmwseg.pipeline import (
    SegmentConfig,
    IterateConfig,
    SegmentationResult,
    segment,
    segment_iterative,
    otsu_threshold,
    evaluate,
)

__version__ = "0.1.0"

__all__ = [
    "GrayImage",
    "LabelMap",
    "load_pgm",
    "save_pgm",
    "PhantomSpec",
    "make_phantom",
    "GradeMap",
    "grade_of",
    "quantize",
    "Band",
    "BandTree",
    "band_width",
    "build_band_tree",
    "Contour",
    "LmwOptions",
    "find_lmw_bands",
    "shrink_band",
    "fill_contour",
    "SegmentConfig",
    "IterateConfig",
    "SegmentationResult",
    "segment",
    "segment_iterative",
    "otsu_threshold",
    "evaluate",
]
