"""Deterministic synthetic phantoms with ground-truth labels.

Each phantom kind is a pure function of its spec: randomness (grain jitter,
noise) comes from numpy's PCG64 generator seeded with ``spec.seed``, so the
same spec always produces byte-identical images and labels.

Kinds
-----
ramp-disk     bright disk whose intensity falls off as a logistic ramp in
              radius; ground truth is the disk out to the ramp midpoint.
step-disk     ideal step edge: constant disk on constant background.
annulus-band  constant ring between radii r1 (inclusive) and r2 (exclusive).
grains-ramp   K disjoint bright disks over a horizontal illumination ramp
              steep enough that no single global threshold separates every
              grain from every background pixel.
cracks-shadow dark thin ridges with blurred shadow halos on a graded
              background; halos overlap into one connected shadow region.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from lmwseg.image import GrayImage, LabelMap

KINDS = ("ramp-disk", "step-disk", "annulus-band", "grains-ramp", "cracks-shadow")


class PhantomSpecError(ValueError):
    pass


_DEFAULTS: dict[str, dict[str, float]] = {
    "ramp-disk": {
        "cx": -1.0,  # -1 means canvas center
        "cy": -1.0,
        "radius": 16.0,
        "edge_width": 17.0,
        "background": 40.0,
        "peak": 220.0,
        "noise": 0.0,
    },
    "step-disk": {
        "cx": -1.0,
        "cy": -1.0,
        "radius": 30.0,
        "background": 30.0,
        "value": 210.0,
        "noise": 0.0,
    },
    "annulus-band": {
        "cx": -1.0,
        "cy": -1.0,
        "r1": 12.0,
        "r2": 20.0,
        "background": 30.0,
        "value": 200.0,
        "noise": 0.0,
    },
    "grains-ramp": {
        "grains": 9.0,
        "radius": 11.0,
        "radius_jitter": 2.0,
        "center_jitter": 3.0,
        "contrast": 70.0,
        "ramp_lo": 40.0,
        "ramp_hi": 150.0,
        "margin": 6.0,
        "noise": 0.0,
    },
    "cracks-shadow": {
        "cracks": 3.0,
        "bg_lo": 207.0,
        "bg_hi": 235.0,
        "floor_value": 105.0,
        "shoulder_center": 31.0,
        "shoulder_width": 7.0,
        "core_radius": 9.5,
        "ridge_depth": 8.0,
        "ridge_radius": 1.2,
        "spacing": 14.0,
        "waviness": 2.0,
        "noise": 0.0,
    },
}


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one synthetic image; identical specs give identical output."""

    kind: str
    seed: int = 0
    width: int = 128
    height: int = 128
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PhantomSpecError(f"unknown phantom kind {self.kind!r}")
        if self.width < 8 or self.height < 8:
            raise PhantomSpecError("canvas must be at least 8x8")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise PhantomSpecError(f"unknown params for {self.kind}: {sorted(unknown)}")

    def param(self, name: str) -> float:
        return float(self.params.get(name, _DEFAULTS[self.kind][name]))

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "params": {k: self.params[k] for k in sorted(self.params)},
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        doc = json.loads(text)
        return cls(
            kind=doc["kind"],
            seed=int(doc.get("seed", 0)),
            width=int(doc.get("width", 128)),
            height=int(doc.get("height", 128)),
            params=dict(doc.get("params", {})),
        )


def _grid(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    return xs.astype(np.float64), ys.astype(np.float64)


def _center(spec: PhantomSpec) -> tuple[float, float]:
    cx = spec.param("cx")
    cy = spec.param("cy")
    if cx < 0:
        cx = (spec.width - 1) / 2.0
    if cy < 0:
        cy = (spec.height - 1) / 2.0
    return cx, cy


def _check_disk_fits(spec: PhantomSpec, cx: float, cy: float, r: float):
    if r <= 0:
        raise PhantomSpecError(f"radius must be positive, got {r}")
    if cx - r < 1 or cy - r < 1 or cx + r > spec.width - 2 or cy + r > spec.height - 2:
        raise PhantomSpecError(
            f"disk (cx={cx}, cy={cy}, r={r}) does not fit a {spec.width}x{spec.height} canvas"
        )


def _finish(spec: PhantomSpec, values: np.ndarray, rng: np.random.Generator,
            labels: np.ndarray, maxval: int = 255) -> tuple[GrayImage, LabelMap]:
    noise = spec.param("noise")
    if noise > 0:
        values = values + rng.integers(-int(noise), int(noise) + 1, size=values.shape)
    values = np.clip(np.rint(values), 0, maxval).astype(np.int32)
    return GrayImage(values, maxval=maxval), LabelMap(labels.astype(np.int32))


def ramp_disk_profile(spec: PhantomSpec):
    """Analytic radial intensity profile of a ramp-disk phantom.

    The falloff is an S-curve built from two exponential flanks (a Laplace
    CDF): intensity sits halfway between plateau and background at
    ``radius``, where the descent is steepest.  The flanks are clamped to
    the plateaus beyond 2.5 edge widths, where the residual is far below
    one grade step.  Returns a vectorized callable r -> intensity (float,
    before rounding); independent oracles use it to locate the
    steepest-descent radius.
    """
    if spec.kind != "ramp-disk":
        raise PhantomSpecError("profile is defined for ramp-disk specs only")
    r0 = spec.param("radius")
    s = spec.param("edge_width")
    bg = spec.param("background")
    peak = spec.param("peak")
    half = (peak - bg) / 2.0

    def profile(r):
        r = np.asarray(r, dtype=np.float64)
        x = np.clip((r - r0) / s, -2.5, 2.5)
        return np.where(x <= 0, peak - half * np.exp(x), bg + half * np.exp(-x))

    return profile


def _make_ramp_disk(spec: PhantomSpec, rng) -> tuple[GrayImage, LabelMap]:
    cx, cy = _center(spec)
    r0 = spec.param("radius")
    # beyond the clamp the profile is exactly the background plateau
    _check_disk_fits(spec, cx, cy, r0 + 2.5 * spec.param("edge_width"))
    xs, ys = _grid(spec)
    r = np.hypot(xs - cx, ys - cy)
    values = ramp_disk_profile(spec)(r)
    labels = (r <= r0).astype(np.int32)
    return _finish(spec, values, rng, labels)


def _make_step_disk(spec: PhantomSpec, rng) -> tuple[GrayImage, LabelMap]:
    cx, cy = _center(spec)
    r0 = spec.param("radius")
    _check_disk_fits(spec, cx, cy, r0)
    xs, ys = _grid(spec)
    inside = np.hypot(xs - cx, ys - cy) <= r0
    values = np.where(inside, spec.param("value"), spec.param("background"))
    return _finish(spec, values, rng, inside.astype(np.int32))


def _make_annulus_band(spec: PhantomSpec, rng) -> tuple[GrayImage, LabelMap]:
    cx, cy = _center(spec)
    r1 = spec.param("r1")
    r2 = spec.param("r2")
    if not 0 < r1 < r2:
        raise PhantomSpecError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")
    _check_disk_fits(spec, cx, cy, r2)
    xs, ys = _grid(spec)
    r = np.hypot(xs - cx, ys - cy)
    ring = (r >= r1) & (r < r2)
    values = np.where(ring, spec.param("value"), spec.param("background"))
    return _finish(spec, values, rng, ring.astype(np.int32))


def _make_grains_ramp(spec: PhantomSpec, rng) -> tuple[GrayImage, LabelMap]:
    k = int(spec.param("grains"))
    if k < 1:
        raise PhantomSpecError(f"grain count must be >= 1, got {k}")
    radius = spec.param("radius")
    r_jit = spec.param("radius_jitter")
    c_jit = spec.param("center_jitter")
    margin = spec.param("margin")
    lo, hi = spec.param("ramp_lo"), spec.param("ramp_hi")
    contrast = spec.param("contrast")
    if hi <= lo:
        raise PhantomSpecError("ramp_hi must exceed ramp_lo")

    cells = math.ceil(math.sqrt(k))
    cell_w = (spec.width - 2 * margin) / cells
    cell_h = (spec.height - 2 * margin) / cells
    r_max = radius + r_jit
    # grains stay disjoint and off the border as long as a jittered disk
    # cannot leave its cell
    if min(cell_w, cell_h) < 2 * (r_max + c_jit) + 2:
        raise PhantomSpecError(
            f"{k} grains of radius {r_max} do not fit a {spec.width}x{spec.height} canvas"
        )

    xs, ys = _grid(spec)
    ramp = lo + (hi - lo) * xs / (spec.width - 1)
    values = ramp.copy()
    labels = np.zeros(values.shape, dtype=np.int32)
    grain_min = math.inf
    for i in range(k):
        row, col = divmod(i, cells)
        cx = margin + (col + 0.5) * cell_w + rng.uniform(-c_jit, c_jit)
        cy = margin + (row + 0.5) * cell_h + rng.uniform(-c_jit, c_jit)
        rr = radius + rng.uniform(-r_jit, r_jit)
        inside = np.hypot(xs - cx, ys - cy) <= rr
        # constant grain brightness: local illumination plus fixed contrast
        value = lo + (hi - lo) * cx / (spec.width - 1) + contrast
        values[inside] = value
        labels[inside] = i + 1
        grain_min = min(grain_min, value)
    # contract: some background is brighter than the dimmest grain, so no
    # single global threshold can be correct everywhere
    if grain_min >= hi:
        raise PhantomSpecError(
            "ramp too shallow: a global threshold could separate grains from background"
        )
    return _finish(spec, values, rng, labels)


def _shadow_extent(spec: PhantomSpec) -> float:
    # three logistic widths past the center the residual is under half a grade
    return spec.param("shoulder_center") + 3.0 * spec.param("shoulder_width")


def _crack_polylines(spec: PhantomSpec, rng) -> list[np.ndarray]:
    n = int(spec.param("cracks"))
    if n < 1:
        raise PhantomSpecError(f"crack count must be >= 1, got {n}")
    spacing = spec.param("spacing")
    wav = spec.param("waviness")
    pad = _shadow_extent(spec) + 6
    x0, x1 = pad, spec.width - 1 - pad
    if x1 - x0 < 8:
        raise PhantomSpecError("canvas too narrow for cracks")
    y_mid = (spec.height - 1) / 2.0
    y_base = y_mid - spacing * (n - 1) / 2.0
    if y_base - wav < pad or y_base + spacing * (n - 1) + wav > spec.height - 1 - pad:
        raise PhantomSpecError("cracks do not fit the canvas vertically")
    lines = []
    n_pts = 7
    for i in range(n):
        xs = np.linspace(x0, x1, n_pts)
        ys = y_base + i * spacing + rng.uniform(-wav, wav, size=n_pts)
        lines.append(np.stack([xs, ys], axis=1))
    return lines


def _dist_to_polyline(xs, ys, line: np.ndarray) -> np.ndarray:
    d = np.full(xs.shape, np.inf)
    for (ax, ay), (bx, by) in zip(line[:-1], line[1:]):
        vx, vy = bx - ax, by - ay
        ll = vx * vx + vy * vy
        t = np.clip(((xs - ax) * vx + (ys - ay) * vy) / ll, 0.0, 1.0)
        d = np.minimum(d, np.hypot(xs - (ax + t * vx), ys - (ay + t * vy)))
    return d


def _make_cracks_shadow(spec: PhantomSpec, rng) -> tuple[GrayImage, LabelMap]:
    """Dark ridges inside one merged flat shadow pool with a blurred shoulder.

    Adjacent shadow cores overlap (spacing < 2 * core_radius), so every
    iso-intensity region of the shoulder encloses the whole complex rather
    than a single crack.  The shoulder is a logistic ramp whose descent is
    steepest at ``shoulder_center`` away from the cracks, well outside the
    flat floor.  The ridges sit only ``ridge_depth`` below the floor, less
    than one global grade step: they only become separable after the
    intensity range is recomputed inside the pool.
    """
    lines = _crack_polylines(spec, rng)
    if int(spec.param("cracks")) > 1 and spec.param("spacing") + 2 * spec.param("waviness") > (
        2 * spec.param("core_radius")
    ):
        raise PhantomSpecError("shadow cores must overlap: spacing too wide for core_radius")
    xs, ys = _grid(spec)
    bg = spec.param("bg_lo") + (spec.param("bg_hi") - spec.param("bg_lo")) * xs / (spec.width - 1)
    floor = spec.param("floor_value")
    center = spec.param("shoulder_center")
    tau = spec.param("shoulder_width")
    core_r = spec.param("core_radius")
    ridge_depth = spec.param("ridge_depth")
    ridge_r = spec.param("ridge_radius")
    extent = _shadow_extent(spec)

    dists = np.stack([_dist_to_polyline(xs, ys, line) for line in lines])
    d = dists.min(axis=0)
    nearest = dists.argmin(axis=0)
    values = bg - (bg - floor) / (1.0 + np.exp((d - center) / tau))
    values[d <= core_r] = floor
    values[d > extent] = bg[d > extent]
    ridge = d <= ridge_r
    values[ridge] -= ridge_depth
    labels = np.where(ridge, nearest + 1, 0).astype(np.int32)
    return _finish(spec, values, rng, labels)


_MAKERS = {
    "ramp-disk": _make_ramp_disk,
    "step-disk": _make_step_disk,
    "annulus-band": _make_annulus_band,
    "grains-ramp": _make_grains_ramp,
    "cracks-shadow": _make_cracks_shadow,
}


def make_phantom(spec: PhantomSpec) -> tuple[GrayImage, LabelMap]:
    """Render the phantom image and its ground-truth label map."""
    rng = np.random.default_rng(spec.seed)
    return _MAKERS[spec.kind](spec, rng)
