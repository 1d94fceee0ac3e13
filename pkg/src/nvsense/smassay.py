"""Single-molecule surface-assay statistics.

Synthetic fluorescence frames, difference-of-Gaussians spot detection,
adsorption-density titration with exact Poisson intervals, photobleach
step classification by recursive change-point search, AFM roughness, and the
layer-stability fit pipelines.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from . import fitcore

PIXEL_PITCH_DEFAULT = 0.22   # um; 60x objective with 13 um camera pixels
PSF_SIGMA_DEFAULT = 1.5      # px

# step classifier defaults, matched to 1 s exposure traces
STEP_T_THRESHOLD = 5.0
STEP_MIN_SEGMENT = 5


@dataclass
class ImageFrame:
    """2-D intensity grid with physical pixel pitch."""

    pixels: np.ndarray
    pixel_pitch: float   # um
    exposure: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D grid")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")

    @property
    def area(self) -> float:
        """Field-of-view area in um^2."""
        return self.pixels.size * self.pixel_pitch**2


@dataclass
class TraceSeries:
    """Per-spot intensity versus time, uniformly sampled."""

    times: np.ndarray
    intensity: np.ndarray
    spot_id: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.times.shape != self.intensity.shape:
            raise ValueError("times and intensity must have the same length")


@dataclass
class TitrationPoint:
    biotin_fraction: float
    density: float    # um^-2
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not self.ci_low <= self.density <= self.ci_high:
            raise ValueError("confidence interval must contain the estimate")


@dataclass
class HeightMap:
    """AFM height grid in picometers."""

    heights: np.ndarray
    lateral_pitch: float   # nm

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.heights.ndim != 2:
            raise ValueError("heights must be a 2-D grid")


def synth_image(
    density: float,
    fov_area: float,
    pixel_pitch: float = PIXEL_PITCH_DEFAULT,
    psf_sigma: float = PSF_SIGMA_DEFAULT,
    photons_per_spot: float = 2000.0,
    bg_per_px: float = 50.0,
    seed: int = 0,
) -> ImageFrame:
    """Render a sparse-emitter frame: Poisson emitter count, uniform positions,
    Gaussian PSF splats, and per-pixel Poisson noise over a flat background."""
    if density < 0 or fov_area <= 0:
        raise ValueError("density must be >= 0 and fov_area > 0")
    rng = np.random.default_rng(seed)
    side = int(round(np.sqrt(fov_area) / pixel_pitch))
    shape = (side, side)

    expected = np.zeros(shape)
    n_emitters = rng.poisson(density * fov_area)
    if n_emitters:
        pos = rng.uniform(0, side, (n_emitters, 2))
        half = int(np.ceil(5 * psf_sigma))
        for y, x in pos:
            iy, ix = int(round(y)), int(round(x))
            ys = slice(max(iy - half, 0), min(iy + half + 1, side))
            xs = slice(max(ix - half, 0), min(ix + half + 1, side))
            gy = np.arange(ys.start, ys.stop)
            gx = np.arange(xs.start, xs.stop)
            g = np.exp(-((gy[:, None] - y) ** 2 + (gx[None, :] - x) ** 2) / (2 * psf_sigma**2))
            expected[ys, xs] += photons_per_spot * g / (2 * np.pi * psf_sigma**2)

    pixels = rng.poisson(expected + bg_per_px).astype(float)
    return ImageFrame(pixels, pixel_pitch)


@dataclass(frozen=True)
class DetectParams:
    sigma_small: float = PSF_SIGMA_DEFAULT        # DoG bandpass radii, px
    sigma_large: float = 3.0 * PSF_SIGMA_DEFAULT
    threshold_sigmas: float = 4.0                 # in robust background sigma units
    min_separation: float = 3.0                   # px
    aggregate_area_factor: float = 3.0            # x PSF footprint


def detect_spots(frame: ImageFrame, params: DetectParams = DetectParams()):
    """Detect diffraction-limited spots.

    Bandpass with a difference of Gaussians, find local maxima above
    k * (robust sigma of the bandpassed image), and suppress maxima closer
    than min_separation.  Returns (positions_px, aggregate_count): positions
    as an (n, 2) array of (row, col), plus the number of large connected
    regions flagged as aggregates (area > aggregate_area_factor x PSF
    footprint) and excluded.
    """
    img = frame.pixels
    if img.size == 0 or np.all(img == 0):
        return np.empty((0, 2)), 0
    dog = ndimage.gaussian_filter(img, params.sigma_small) - ndimage.gaussian_filter(
        img, params.sigma_large
    )
    # robust background scale from the median absolute deviation
    sigma = 1.4826 * np.median(np.abs(dog - np.median(dog)))
    if sigma == 0:
        return np.empty((0, 2)), 0
    thresh = params.threshold_sigmas * sigma

    mask = dog > thresh
    footprint_px = np.pi * params.sigma_small**2 * 4  # ~2 sigma disc
    labels, n_lab = ndimage.label(mask)
    aggregates = 0
    if n_lab:
        areas = ndimage.sum_labels(mask, labels, index=np.arange(1, n_lab + 1))
        big = np.nonzero(areas > params.aggregate_area_factor * footprint_px)[0] + 1
        aggregates = big.size
        for lab in big:
            mask[labels == lab] = False

    local_max = dog == ndimage.maximum_filter(dog, size=int(2 * params.min_separation) + 1)
    cand = np.argwhere(local_max & mask)
    if cand.size == 0:
        return np.empty((0, 2)), aggregates

    # non-maximum suppression by descending peak strength
    order = np.argsort(-dog[cand[:, 0], cand[:, 1]])
    cand = cand[order]
    kept = []
    for p in cand:
        if all(np.hypot(*(p - q)) >= params.min_separation for q in kept):
            kept.append(p)
    return np.array(kept, dtype=float), aggregates


def estimate_density(n_spots: int, area: float, biotin_fraction: float = np.nan) -> TitrationPoint:
    """Spots per um^2 with an exact Poisson 95% confidence interval."""
    if n_spots < 0 or area <= 0:
        raise ValueError("n_spots must be >= 0 and area > 0")
    lo = stats.chi2.ppf(0.025, 2 * n_spots) / 2 if n_spots > 0 else 0.0
    hi = stats.chi2.ppf(0.975, 2 * n_spots + 2) / 2
    return TitrationPoint(
        biotin_fraction=biotin_fraction,
        density=n_spots / area,
        ci_low=lo / area,
        ci_high=hi / area,
    )


def fit_titration(points) -> dict:
    """Weighted line density = rho_ns + slope * fraction; reports dynamic range.

    Weights are inverse CI half-widths.  A negative fitted nonspecific density
    is clamped to zero with a warning.
    """
    fr = np.array([p.biotin_fraction for p in points])
    dens = np.array([p.density for p in points])
    hw = np.array([max((p.ci_high - p.ci_low) / 2, 1e-12) for p in points])
    w = 1.0 / hw
    X = np.column_stack([np.ones_like(fr), fr])
    coef, *_ = np.linalg.lstsq(X * w[:, None], dens * w, rcond=None)
    rho_ns, slope = float(coef[0]), float(coef[1])
    if rho_ns < 0:
        warnings.warn("nonspecific density fitted negative; clamped to 0")
        rho_ns = 0.0
    top = float(dens[np.argmax(fr)])
    dynamic_range = top / rho_ns if rho_ns > 0 else np.inf
    return {"rho_ns": rho_ns, "slope": slope, "dynamic_range": dynamic_range}


def synth_bleach_trace(
    n_steps: int,
    step_height: float,
    noise_sigma: float,
    bleach_times,
    length: int,
    seed: int = 0,
    dt: float = 1.0,
) -> TraceSeries:
    """Piecewise-constant bleaching trace with Gaussian noise.

    Intensity starts at n_steps * step_height and drops by one step_height at
    each bleach time (sample index).
    """
    bleach_times = sorted(bleach_times)
    if len(bleach_times) != n_steps:
        raise ValueError("need one bleach time per step")
    rng = np.random.default_rng(seed)
    level = np.full(length, float(n_steps) * step_height)
    for bt in bleach_times:
        level[int(bt):] -= step_height
    intensity = level + rng.normal(0, noise_sigma, length)
    return TraceSeries(np.arange(length) * dt, intensity)


def _t_statistic(x, split):
    a, b = x[:split], x[split:]
    va = np.var(a, ddof=1) if a.size > 1 else 0.0
    vb = np.var(b, ddof=1) if b.size > 1 else 0.0
    se = np.sqrt(va / a.size + vb / b.size)
    if se == 0:
        return np.inf if np.mean(a) != np.mean(b) else 0.0
    return abs(np.mean(a) - np.mean(b)) / se


def _find_changepoints(x, offset, out, threshold, min_seg):
    n = x.size
    if n < 2 * min_seg:
        return
    splits = np.arange(min_seg, n - min_seg + 1)
    tvals = np.array([_t_statistic(x, s) for s in splits])
    i = int(np.argmax(tvals))
    if tvals[i] < threshold:
        return
    s = int(splits[i])
    _find_changepoints(x[:s], offset, out, threshold, min_seg)
    out.append(offset + s)
    _find_changepoints(x[s:], offset + s, out, threshold, min_seg)


def classify_steps(
    trace: TraceSeries,
    threshold: float = STEP_T_THRESHOLD,
    min_segment: int = STEP_MIN_SEGMENT,
) -> dict:
    """Count downward bleach steps by recursive two-sample t-statistic search.

    Splits the trace wherever |t| exceeds the threshold (respecting the
    minimum segment length), then keeps only change points where the mean
    decreases.  Returns {'n_steps', 'step_times'}.
    """
    x = trace.intensity
    cps = []
    _find_changepoints(x, 0, cps, threshold, min_segment)
    steps = [i for i in cps if np.mean(x[max(i - min_segment, 0):i]) > np.mean(x[i:i + min_segment])]
    return {"n_steps": len(steps), "step_times": [float(trace.times[i]) for i in steps]}


def roughness_Ra(height_map: HeightMap) -> float:
    """Arithmetical mean deviation after first-order plane subtraction (pm)."""
    z = height_map.heights
    ny, nx = z.shape
    yy, xx = np.mgrid[0:ny, 0:nx]
    X = np.column_stack([np.ones(z.size), yy.ravel(), xx.ravel()])
    coef, *_ = np.linalg.lstsq(X, z.ravel(), rcond=None)
    flat = z.ravel() - X @ coef
    return float(np.mean(np.abs(flat - np.mean(flat))))


def stability_pipeline(times, values, kind: str) -> fitcore.FitResult:
    """Dispatch stability series to the exponential or linear fitter.

    kind = 'counts' fits V0 * 2^(-t/half_life); kind = 'thickness' fits a line
    whose slope is the dissolution rate in nm/day.
    """
    if kind == "counts":
        return fitcore.fit_exp_decay(times, values)
    if kind == "thickness":
        return fitcore.fit_linear(times, values)
    raise ValueError(f"unknown stability kind {kind!r}")


ETCH_RATE_NM_PER_MIN = 3.6  # Al2O3 removal in 1 M KOH


def etch_time(thickness_nm: float) -> float:
    """Minutes of KOH soak to remove the given oxide thickness."""
    if thickness_nm < 0:
        raise ValueError("thickness must be nonnegative")
    return thickness_nm / ETCH_RATE_NM_PER_MIN


def gaussian_chain_extent(n_monomers: int, segment_nm: float = 0.35) -> float:
    """Ideal-chain layer extent segment * sqrt(n) in nm."""
    if n_monomers < 1 or segment_nm <= 0:
        raise ValueError("need n_monomers >= 1 and positive segment length")
    return segment_nm * np.sqrt(n_monomers)
