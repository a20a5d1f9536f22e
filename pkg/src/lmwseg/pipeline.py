"""End-to-end segmentation, the iterative refinement variant, a global
Otsu baseline, and object-overlap metrics.

``segment``: quantize -> band tree -> minimal-width bands -> thin -> fill.
``segment_iterative``: re-runs the pipeline inside every object that fails
a user predicate, with the intensity range recomputed inside the object's
mask so local contrast is restored; failing objects are replaced by their
sub-objects until all pass or the iteration cap is hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from lmwseg.bands import _STRUCT, build_band_tree
from lmwseg.contours import Contour, LmwOptions, _fill_points, find_lmw_bands, shrink_band
from lmwseg.grades import quantize
from lmwseg.image import GrayImage, LabelMap

PREDICATES = ("max-area-fraction", "min-contrast")


@dataclass(frozen=True)
class SegmentConfig:
    n_grades: int = 15
    invert: bool = False
    connectivity: int = 4
    lmw: LmwOptions = LmwOptions()
    min_object_area: int = 1

    def __post_init__(self):
        if self.n_grades < 1:
            raise ValueError(f"n_grades must be >= 1, got {self.n_grades}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class IterateConfig:
    predicate: str = "max-area-fraction"
    threshold: float = 0.2
    max_iter: int = 5

    def __post_init__(self):
        if self.predicate not in PREDICATES:
            raise ValueError(f"predicate must be one of {PREDICATES}, got {self.predicate!r}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.predicate == "max-area-fraction" and not 0 < self.threshold <= 1:
            raise ValueError("max-area-fraction threshold must be in (0, 1]")
        if self.predicate == "min-contrast" and self.threshold < 0:
            raise ValueError("min-contrast threshold must be >= 0")


@dataclass(frozen=True)
class ObjectStats:
    label: int
    area: int
    mean_intensity: float
    band_id: int
    grade: int
    iteration: int


@dataclass(frozen=True)
class SegmentationResult:
    contours: tuple
    labels: LabelMap
    objects: tuple
    tree_summary: dict

    def objects_json(self) -> list[dict]:
        return [
            {
                "label": o.label,
                "area": o.area,
                "mean_intensity": o.mean_intensity,
                "band_id": o.band_id,
                "grade": o.grade,
                "iteration": o.iteration,
            }
            for o in self.objects
        ]


@dataclass
class _SegObject:
    contour: Contour
    mask: np.ndarray
    area: int
    iteration: int
    refinable: bool = True


def _segment_core(
    image: GrayImage, config: SegmentConfig, roi: np.ndarray | None = None, iteration: int = 0
) -> tuple[list[_SegObject], dict]:
    grade_map = quantize(image, config.n_grades, config.invert, roi=roi)
    if grade_map.degenerate:
        return [], {"bands": 0, "virtual_bands": 0, "lmw_bands": 0}
    tree = build_band_tree(grade_map, config.connectivity)
    lmw = find_lmw_bands(tree, config.lmw)

    contours: list[Contour] = []
    seen: set[frozenset] = set()
    shrunk_keys: set[tuple] = set()
    for band_id in sorted(lmw):
        band = tree.bands[band_id]
        # every virtual band of one chain traces the same ring: shrink once
        key = (band.virtual, tree.real_band(band_id).id if band.virtual else band_id)
        if key in shrunk_keys:
            continue
        shrunk_keys.add(key)
        for contour in shrink_band(band, tree):
            if contour.point_set not in seen:
                seen.add(contour.point_set)
                contours.append(contour)

    objects: list[_SegObject] = []
    for contour in contours:
        # barrier flood handles closed curves and degenerate thin ones
        # alike: an arc with no interior simply fills to itself
        mask = _fill_points(contour.points, image.width, image.height)
        area = int(mask.sum())
        if area < config.min_object_area:
            continue
        objects.append(_SegObject(contour=contour, mask=mask, area=area, iteration=iteration))

    summary = {
        "bands": len(tree.bands),
        "virtual_bands": sum(1 for b in tree.bands if b.virtual),
        "lmw_bands": len(lmw),
    }
    return objects, summary


def _assemble(image: GrayImage, objects: list[_SegObject], summary: dict) -> SegmentationResult:
    # larger objects first so nested (smaller) objects overwrite: every
    # pixel ends up with its innermost enclosing object
    objects = sorted(
        objects,
        key=lambda o: (-o.area, o.contour.band_id, o.iteration, o.contour.points[:1]),
    )
    unique: list[_SegObject] = []
    seen_masks: set[bytes] = set()
    for obj in objects:
        key = np.packbits(obj.mask).tobytes()
        if key not in seen_masks:
            seen_masks.add(key)
            unique.append(obj)
    objects = unique
    labels = np.zeros((image.height, image.width), dtype=np.int32)
    stats = []
    for i, obj in enumerate(objects):
        labels[obj.mask] = i + 1
        stats.append(
            ObjectStats(
                label=i + 1,
                area=obj.area,
                mean_intensity=float(image.pixels[obj.mask].mean()),
                band_id=obj.contour.band_id,
                grade=obj.contour.grade,
                iteration=obj.iteration,
            )
        )
    return SegmentationResult(
        contours=tuple(o.contour for o in objects),
        labels=LabelMap(labels),
        objects=tuple(stats),
        tree_summary=summary,
    )


def segment(image: GrayImage, config: SegmentConfig = SegmentConfig()) -> SegmentationResult:
    """Segment bright objects on a dark background (or the reverse with
    ``config.invert``).  A constant image yields an empty result."""
    objects, summary = _segment_core(image, config)
    return _assemble(image, objects, summary)


def _predicate_passes(
    obj: _SegObject, image: GrayImage, config: SegmentConfig, iterate: IterateConfig
) -> bool:
    if iterate.predicate == "max-area-fraction":
        return obj.area <= iterate.threshold * image.width * image.height
    # min-contrast: mean inside minus mean over the surrounding ring, in the
    # working (possibly inverted) intensities
    work = image.pixels
    if config.invert:
        work = (int(work.min()) + int(work.max())) - work
    ring = ndimage.binary_dilation(obj.mask, _STRUCT[8]) & ~obj.mask
    if not ring.any():
        return True
    contrast = float(work[obj.mask].mean()) - float(work[ring].mean())
    return contrast >= iterate.threshold


def segment_iterative(
    image: GrayImage,
    config: SegmentConfig = SegmentConfig(),
    iterate: IterateConfig = IterateConfig(),
) -> SegmentationResult:
    """Segment, then re-segment inside every object failing the predicate.

    Each failing object is re-run with the grade range recomputed inside
    its own mask and replaced by the sub-objects found there; an object
    that cannot be split further is kept as-is.  Objects carry the
    iteration index that produced them.
    """
    current, summary = _segment_core(image, config)
    iterations = 0
    for it in range(1, iterate.max_iter + 1):
        failing = [
            o for o in current
            if o.refinable and not _predicate_passes(o, image, config, iterate)
        ]
        if not failing:
            break
        iterations = it
        failing_ids = {id(o) for o in failing}
        progressed = False
        refined: list[_SegObject] = []
        for obj in current:
            if id(obj) not in failing_ids:
                refined.append(obj)
                continue
            subs, _ = _segment_core(image, config, roi=obj.mask, iteration=it)
            subs = [s for s in subs if not np.array_equal(s.mask, obj.mask)]
            if subs:
                refined.extend(subs)
                progressed = True
            else:
                obj.refinable = False
                refined.append(obj)
        current = refined
        if not progressed:
            break
    summary = dict(summary)
    summary["iterations"] = iterations
    return _assemble(image, current, summary)


def otsu_threshold(image: GrayImage) -> tuple[int, LabelMap]:
    """Global threshold maximizing between-class variance; mask is pixels > t.

    Ties resolve to the lowest threshold.  Constant images are rejected.
    """
    px = image.pixels
    if px.min() == px.max():
        raise ValueError("cannot threshold a constant image")
    hist = np.bincount(px.ravel(), minlength=image.maxval + 1).astype(np.float64)
    values = np.arange(hist.size, dtype=np.float64)
    total = px.size
    w0 = np.cumsum(hist)
    mu0 = np.cumsum(hist * values)
    mu_total = mu0[-1]
    valid = (w0 > 0) & (w0 < total)
    sigma_b = np.zeros(hist.size)
    sigma_b[valid] = (mu_total * w0[valid] - mu0[valid] * total) ** 2 / (
        w0[valid] * (total - w0[valid])
    )
    threshold = int(np.argmax(sigma_b))
    return threshold, LabelMap((px > threshold).astype(np.int32))


@dataclass(frozen=True)
class ObjectMatch:
    pred_id: int
    truth_id: int
    iou: float
    dice: float


@dataclass(frozen=True)
class MetricsReport:
    mean_iou: float
    matches: tuple
    missed: int
    spurious: int
    matched_recall: float

    def to_json_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "objects": [
                {"pred_id": m.pred_id, "truth_id": m.truth_id, "iou": m.iou, "dice": m.dice}
                for m in self.matches
            ],
            "missed": self.missed,
            "spurious": self.spurious,
            "matched_recall": self.matched_recall,
        }


def evaluate(pred: LabelMap, truth: LabelMap) -> MetricsReport:
    """Greedy one-to-one matching of predicted to truth objects by IoU.

    Pairs are matched in descending IoU order (ties: lower ids).  The
    report carries per-pair IoU/Dice, the mean IoU over matched pairs,
    unmatched counts, and the fraction of truth foreground recovered by
    matched predictions (``matched_recall``).
    """
    if pred.labels.shape != truth.labels.shape:
        raise ValueError(
            f"dimension mismatch: pred {pred.labels.shape} vs truth {truth.labels.shape}"
        )
    p = pred.labels.ravel().astype(np.int64)
    t = truth.labels.ravel().astype(np.int64)
    p_sizes = {int(i): int(n) for i, n in zip(*np.unique(p[p > 0], return_counts=True))}
    t_sizes = {int(i): int(n) for i, n in zip(*np.unique(t[t > 0], return_counts=True))}

    both = (p > 0) & (t > 0)
    t_max = int(t.max()) + 1
    keys, counts = np.unique(p[both] * t_max + t[both], return_counts=True)
    pairs = []
    for key, inter in zip(keys.tolist(), counts.tolist()):
        pi, ti = key // t_max, key % t_max
        union = p_sizes[pi] + t_sizes[ti] - inter
        pairs.append((inter / union, pi, ti, inter))
    pairs.sort(key=lambda x: (-x[0], x[1], x[2]))

    used_p: set[int] = set()
    used_t: set[int] = set()
    matches = []
    recovered = 0
    for iou, pi, ti, inter in pairs:
        if pi in used_p or ti in used_t:
            continue
        used_p.add(pi)
        used_t.add(ti)
        dice = 2 * inter / (p_sizes[pi] + t_sizes[ti])
        matches.append(ObjectMatch(pred_id=pi, truth_id=ti, iou=iou, dice=dice))
        recovered += inter
    total_truth = sum(t_sizes.values())
    return MetricsReport(
        mean_iou=float(np.mean([m.iou for m in matches])) if matches else 0.0,
        matches=tuple(matches),
        missed=len(t_sizes) - len(used_t),
        spurious=len(p_sizes) - len(used_p),
        matched_recall=(recovered / total_truth) if total_truth else 1.0,
    )
