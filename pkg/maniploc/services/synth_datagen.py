"""
Synthetic forgery generation.

Produces the four training classes (splice, copy-move, removal, pristine)
with exact ground-truth masks. Every image stays on the 8-bit grid, so a
pixel either keeps its target value or differs by at least 1/255; the mask
is the set of footprint pixels that actually changed.

Each sample draws from its own generator derived from
(seed, kind, index, attempt); serial and process-parallel corpus builds are
therefore identical.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from maniploc.exceptions import ConfigurationError, GenerationError, ValidationError
from maniploc.models.configs import GenConfig
from maniploc.models.structures import KINDS, ForgerySample, SourceImage, SourcePool
from maniploc.utils.image_io import quantize
from maniploc.utils.logger import get_logger
from maniploc.utils.progress import track
from maniploc.utils.seeding import derive_rng

logger = get_logger(__name__)

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


# Contours


def _closed_bezier(points: np.ndarray, samples_per_segment: int = 24) -> np.ndarray:
    """
    Closed composite cubic Bézier through ``points`` (K×2).

    Inner control points follow Catmull-Rom tangents, so the curve passes
    through every point with a continuous tangent.
    """
    n = len(points)
    t = np.linspace(0.0, 1.0, samples_per_segment, endpoint=False)[:, None]
    segments = []
    for i in range(n):
        p0, p3 = points[i], points[(i + 1) % n]
        p1 = p0 + (p3 - points[i - 1]) / 6.0
        p2 = p3 - (points[(i + 2) % n] - p0) / 6.0
        segments.append(
            (1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * p1 + 3 * (1 - t) * t ** 2 * p2 + t ** 3 * p3
        )
    return np.concatenate(segments)


def _polygon_area(curve: np.ndarray) -> float:
    x, y = curve[:, 0], curve[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(mask)
    if count <= 1:
        return mask.astype(np.uint8)
    sizes = ndimage.sum(mask, labels, index=np.arange(1, count + 1))
    return (labels == int(np.argmax(sizes)) + 1).astype(np.uint8)


def _draw_contour_mask(
    h: int,
    w: int,
    rng: np.random.Generator,
    area_bounds: Tuple[float, float],
    n_points: Tuple[int, int],
) -> Optional[np.ndarray]:
    n = int(rng.integers(n_points[0], n_points[1] + 1))
    angles = np.sort((np.arange(n) + rng.uniform(-0.35, 0.35, n)) * 2.0 * np.pi / n)
    radii = rng.uniform(0.5, 1.0, n)
    unit = np.stack([np.cos(angles) * radii, np.sin(angles) * radii], axis=1)
    curve = _closed_bezier(unit)

    target_area = rng.uniform(*area_bounds) * h * w
    points = curve * math.sqrt(target_area / max(_polygon_area(curve), 1e-12))
    low, high = points.min(axis=0), points.max(axis=0)
    if high[0] - low[0] > w - 1 or high[1] - low[1] > h - 1:
        return None
    offset = np.array([rng.uniform(-low[0], w - 1 - high[0]), rng.uniform(-low[1], h - 1 - high[1])])

    mask = np.zeros((h, w), dtype=np.uint8)
    cv2.fillPoly(mask, [np.round(points + offset).astype(np.int32)], 1)
    return _largest_component(mask)


def _clamp_area(mask: np.ndarray, area_bounds: Tuple[float, float], max_steps: int = 64) -> np.ndarray:
    lo, hi = area_bounds
    total = mask.size
    for _ in range(max_steps):
        area = mask.sum() / total
        if area < lo:
            mask = cv2.dilate(mask, _CROSS)
        elif area > hi:
            mask = _largest_component(cv2.erode(mask, _CROSS))
        else:
            break
    if not mask.any() or not lo <= mask.sum() / total <= hi:
        raise GenerationError(f"Cannot bring region area into bounds {area_bounds}")
    return mask


def random_bezier_mask(
    h: int,
    w: int,
    rng: np.random.Generator,
    area_bounds: Tuple[float, float] = (0.01, 0.30),
    n_points: Tuple[int, int] = (4, 8),
    max_retries: int = 20,
) -> np.ndarray:
    """
    One filled, closed, 4-connected region bounded by a random Bézier contour.

    Control points sit at sorted random angles around the origin with random
    radii; the contour is scaled so its area hits a fraction drawn uniformly
    from ``area_bounds``, then placed at a random position that keeps it
    inside the image.

    Args:
        h, w: Mask size (both >= 32)
        rng: Random generator
        area_bounds: Allowed area fraction
        n_points: Inclusive range of control-point counts
        max_retries: Regenerations before clamping the area morphologically

    Returns:
        np.ndarray: H×W uint8 of 0/1

    Raises:
        ValidationError: If h or w is below 32
        GenerationError: If the area cannot be brought into bounds
    """
    if h < 32 or w < 32:
        raise ValidationError(f"Mask size must be at least 32x32, got {h}x{w}")

    mask = None
    for _ in range(max_retries):
        candidate = _draw_contour_mask(h, w, rng, area_bounds, n_points)
        if candidate is None or not candidate.any():
            continue
        mask = candidate
        if area_bounds[0] <= mask.mean() <= area_bounds[1]:
            return mask
    if mask is None:
        raise GenerationError("No contour fits inside the image", attempts=max_retries)
    return _clamp_area(mask, area_bounds)


# Transforms


def _draw_transform(rng: np.random.Generator, cfg: GenConfig) -> Dict[str, float]:
    return {
        "scale": float(rng.uniform(*cfg.scale_range)),
        "rotation": float(rng.uniform(*cfg.rotation_range)),
        "gain": float(rng.uniform(*cfg.luminance_range)),
    }


def place_region(
    region: np.ndarray,
    rng: np.random.Generator,
    cfg: GenConfig,
    forbidden: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, Dict[str, Any]]:
    """
    Find an affine placement of ``region`` inside the image.

    Scale and rotation are about the region centroid; the shift is free
    (any position that keeps the region's bounding box inside the image) or
    capped at ``cfg.max_shift`` of the image side.

    Returns:
        (matrix, warped_mask, params): 2×3 affine, placed footprint, drawn values

    Raises:
        GenerationError: If no valid placement is found in
            ``cfg.max_placement_tries`` tries
    """
    h, w = region.shape
    ys, xs = np.nonzero(region)
    cx, cy = float(xs.mean()), float(ys.mean())
    corners = np.array(
        [[xs.min(), ys.min()], [xs.max(), ys.min()], [xs.min(), ys.max()], [xs.max(), ys.max()]],
        dtype=np.float64,
    )

    for _ in range(cfg.max_placement_tries):
        params = _draw_transform(rng, cfg)
        matrix = cv2.getRotationMatrix2D((cx, cy), params["rotation"], params["scale"])
        moved = corners @ matrix[:, :2].T + matrix[:, 2]
        dx_range = [-moved[:, 0].min(), (w - 1) - moved[:, 0].max()]
        dy_range = [-moved[:, 1].min(), (h - 1) - moved[:, 1].max()]
        if cfg.max_shift is not None:
            dx_range = [max(dx_range[0], -cfg.max_shift * w), min(dx_range[1], cfg.max_shift * w)]
            dy_range = [max(dy_range[0], -cfg.max_shift * h), min(dy_range[1], cfg.max_shift * h)]
        if dx_range[0] > dx_range[1] or dy_range[0] > dy_range[1]:
            continue

        dx = float(rng.uniform(*dx_range)) if dx_range[1] > dx_range[0] else float(dx_range[0])
        dy = float(rng.uniform(*dy_range)) if dy_range[1] > dy_range[0] else float(dy_range[0])
        matrix[:, 2] += (dx, dy)
        warped = cv2.warpAffine(region, matrix, (w, h), flags=cv2.INTER_NEAREST, borderValue=0)
        if not warped.any():
            continue
        if forbidden is not None and np.logical_and(warped, forbidden).any():
            continue
        params.update({"shift": [dx, dy], "matrix": matrix.tolist()})
        return matrix, warped, params

    raise GenerationError("No valid placement for the region", attempts=cfg.max_placement_tries)


def warp_patch(source: np.ndarray, matrix: np.ndarray, gain: float) -> np.ndarray:
    """The transformed, gain-adjusted source image, quantized to the 8-bit grid."""
    h, w = source.shape[:2]
    warped = cv2.warpAffine(
        source, np.asarray(matrix, dtype=np.float64), (w, h),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT,
    )
    return quantize(np.clip(warped * gain, 0.0, 1.0))


def _composite(
    target: np.ndarray,
    patch: np.ndarray,
    footprint: np.ndarray,
    feather: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hard-paste ``patch`` into ``target`` over ``footprint``.

    Returns the image and the mask of pixels that actually changed.
    """
    inside = footprint.astype(bool)
    out = target.copy()
    out[inside] = patch[inside]
    if feather:
        edge = inside & ~cv2.erode(footprint.astype(np.uint8), _CROSS).astype(bool)
        out[edge] = quantize(0.5 * patch[edge] + 0.5 * target[edge])
    changed = inside & np.any(out != target, axis=2)
    out[inside & ~changed] = target[inside & ~changed]
    if not changed.any():
        raise GenerationError("Manipulation left the image unchanged")
    return out, changed.astype(np.uint8)


def _region_mask(source: SourceImage, rng: np.random.Generator, cfg: GenConfig) -> Tuple[np.ndarray, str]:
    h, w = source.image.shape[:2]
    if cfg.use_annotations and source.regions:
        lo, hi = cfg.mask_area_bounds
        usable = [r for r in source.regions if r.shape == (h, w) and lo <= r.mean() <= hi]
        if usable:
            return usable[int(rng.integers(len(usable)))].astype(np.uint8), "annotation"
    mask = random_bezier_mask(
        h, w, rng, cfg.mask_area_bounds, cfg.bezier_points, cfg.max_mask_retries
    )
    return mask, "bezier"


def _fit(image: np.ndarray, cfg: GenConfig) -> np.ndarray:
    if image.shape[:2] != tuple(cfg.out_size):
        image = cv2.resize(image, (cfg.out_size[1], cfg.out_size[0]), interpolation=cv2.INTER_LINEAR)
    return quantize(np.clip(image, 0.0, 1.0))


def _as_source(image, source_id: str) -> SourceImage:
    return image if isinstance(image, SourceImage) else SourceImage(np.asarray(image, dtype=np.float32), source_id)


# Sample makers


def make_splice(donor, target, rng: np.random.Generator, cfg: GenConfig) -> ForgerySample:
    """
    Cut a region from ``donor``, transform it and paste it into ``target``.

    The region is an annotated object when the donor has one within the
    area bounds, else a random Bézier mask.

    Raises:
        GenerationError: If no placement is found or nothing changed
    """
    donor, target = _as_source(donor, "donor"), _as_source(target, "target")
    donor_image = _fit(donor.image, cfg)
    target_image = _fit(target.image, cfg)
    region, origin = _region_mask(SourceImage(donor_image, donor.source_id, donor.regions), rng, cfg)
    matrix, footprint, params = place_region(region, rng, cfg)
    patch = warp_patch(donor_image, matrix, params["gain"])
    image, mask = _composite(target_image, patch, footprint, cfg.feather)
    provenance = {"donor": donor.source_id, "target": target.source_id, "region": origin, **params}
    return ForgerySample(image=image, gt_mask=mask, label=1, kind="splice", provenance=provenance)


def make_copy_move(image, rng: np.random.Generator, cfg: GenConfig) -> ForgerySample:
    """
    Duplicate a Bézier region within one image at a disjoint location.

    Only the pasted footprint is marked; the copied source stays pristine.

    Raises:
        GenerationError: If no disjoint in-bounds placement exists after
            ``cfg.max_placement_tries`` tries, or nothing changed
    """
    source = _as_source(image, "image")
    base = _fit(source.image, cfg)
    region = random_bezier_mask(*base.shape[:2], rng, cfg.mask_area_bounds, cfg.bezier_points, cfg.max_mask_retries)
    matrix, footprint, params = place_region(region, rng, cfg, forbidden=region)
    patch = warp_patch(base, matrix, params["gain"])
    out, mask = _composite(base, patch, footprint, cfg.feather)
    provenance = {"image": source.source_id, "region": "bezier", "source_area": int(region.sum()), **params}
    return ForgerySample(image=out, gt_mask=mask, label=1, kind="copy_move", provenance=provenance)


def harmonic_inpaint(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Fill ``mask`` with the discrete harmonic interpolant of its boundary.

    Solves the 4-neighbor Laplace equation over the masked pixels with the
    unmasked neighbors as fixed values; image borders act as reflecting.

    Args:
        image: H×W×C float image
        mask: H×W region to fill

    Returns:
        np.ndarray: Copy of ``image`` with the region replaced

    Raises:
        ValidationError: If the mask covers the whole image
    """
    inside = np.asarray(mask).astype(bool)
    h, w = inside.shape
    ys, xs = np.nonzero(inside)
    n = ys.size
    out = np.array(image, dtype=np.float64, copy=True)
    if n == 0:
        return out.astype(image.dtype)
    if n == h * w:
        raise ValidationError("Cannot inpaint a region covering the whole image")

    values = out.reshape(h, w, -1)
    index = np.full((h, w), -1, dtype=np.int64)
    index[ys, xs] = np.arange(n)

    rows, cols, data = [], [], []
    degree = np.zeros(n)
    rhs = np.zeros((n, values.shape[2]))
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = ys + dy, xs + dx
        valid = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        degree += valid
        p = np.flatnonzero(valid)
        q = index[ny[valid], nx[valid]]
        unknown = q >= 0
        rows.append(p[unknown])
        cols.append(q[unknown])
        data.append(-np.ones(int(unknown.sum())))
        known = p[~unknown]
        np.add.at(rhs, known, values[ny[valid][~unknown], nx[valid][~unknown]])

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    data.append(degree)
    system = sparse.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    solution = spsolve(system, rhs).reshape(n, -1)
    values[ys, xs] = solution
    return values.reshape(out.shape).astype(image.dtype)


def make_removal(image, rng: np.random.Generator, cfg: GenConfig) -> ForgerySample:
    """
    Erase a Bézier region and refill it by harmonic inpainting.

    Raises:
        GenerationError: If the refill leaves every pixel unchanged
    """
    source = _as_source(image, "image")
    base = _fit(source.image, cfg)
    region = random_bezier_mask(*base.shape[:2], rng, cfg.mask_area_bounds, cfg.bezier_points, cfg.max_mask_retries)
    filled = quantize(np.clip(harmonic_inpaint(base, region), 0.0, 1.0))
    out, mask = _composite(base, filled, region)
    provenance = {"image": source.source_id, "region": "bezier", "fill": "harmonic"}
    return ForgerySample(image=out, gt_mask=mask, label=1, kind="removal", provenance=provenance)


def make_pristine(image, rng: np.random.Generator, cfg: GenConfig) -> ForgerySample:
    """An untouched source image with an all-zero mask."""
    source = _as_source(image, "image")
    base = _fit(source.image, cfg)
    mask = np.zeros(base.shape[:2], dtype=np.uint8)
    return ForgerySample(image=base, gt_mask=mask, label=0, kind="pristine", provenance={"image": source.source_id})


# Corpus


def generate_sample(pool: SourcePool, cfg: GenConfig, kind: str, index: int, seed: int) -> ForgerySample:
    """
    Sample ``index`` of class ``kind``, regenerated until it satisfies its
    constraints. Attempt k draws from derive_rng(seed, kind, index, k).

    Raises:
        GenerationError: After ``cfg.max_sample_attempts`` rejected attempts
    """
    if kind not in KINDS:
        raise ConfigurationError(f"Unknown manipulation kind: {kind}")
    if len(pool) == 0:
        raise ConfigurationError("Source pool is empty")

    last_error = None
    for attempt in range(cfg.max_sample_attempts):
        rng = derive_rng(seed, kind, index, attempt)
        target = pool[int(rng.integers(len(pool)))]
        try:
            if kind == "splice":
                donor_index = int(rng.integers(len(pool)))
                if len(pool) > 1 and pool[donor_index] is target:
                    donor_index = (donor_index + 1) % len(pool)
                sample = make_splice(pool[donor_index], target, rng, cfg)
            elif kind == "copy_move":
                sample = make_copy_move(target, rng, cfg)
            elif kind == "removal":
                sample = make_removal(target, rng, cfg)
            else:
                sample = make_pristine(target, rng, cfg)
        except GenerationError as e:
            last_error = e
            continue
        sample.provenance.update({"seed": seed, "index": index, "attempt": attempt})
        return sample

    raise GenerationError(
        f"Could not generate {kind} sample {index}: {last_error.message if last_error else ''}",
        attempts=cfg.max_sample_attempts,
    )


_WORKER_STATE: Dict[str, Any] = {}


def _init_worker(pool: SourcePool, cfg: GenConfig, seed: int) -> None:
    _WORKER_STATE.update(pool=pool, cfg=cfg, seed=seed)


def _worker_generate(job: Tuple[str, int]) -> ForgerySample:
    kind, index = job
    return generate_sample(_WORKER_STATE["pool"], _WORKER_STATE["cfg"], kind, index, _WORKER_STATE["seed"])


def synthesize_corpus(
    pool: SourcePool,
    cfg: GenConfig,
    n_per_class: int,
    seed: Optional[int] = None,
    workers: int = 0,
    kinds: Sequence[str] = KINDS,
) -> List[ForgerySample]:
    """
    Generate ``n_per_class`` samples of every kind.

    Args:
        pool: Source images
        cfg: Generator settings
        n_per_class: Samples per class
        seed: Corpus seed (defaults to ``cfg.rng_seed``)
        workers: Worker processes; 0 runs serially with identical output
        kinds: Classes to generate

    Returns:
        List[ForgerySample]: Ordered by kind, then index
    """
    seed = cfg.rng_seed if seed is None else seed
    jobs = [(kind, index) for kind in kinds for index in range(n_per_class)]
    logger.info(
        f"[SynthDatagen] Generating {len(jobs)} samples ({n_per_class}/class) "
        f"from {len(pool)} source images, seed {seed}, workers {workers}"
    )

    if workers > 0:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(pool, cfg, seed)) as ex:
            samples = list(track(ex.map(_worker_generate, jobs, chunksize=8), "Synthesizing", total=len(jobs)))
    else:
        samples = [
            generate_sample(pool, cfg, kind, index, seed)
            for kind, index in track(jobs, "Synthesizing", total=len(jobs))
        ]

    retried = sum(1 for s in samples if s.provenance.get("attempt", 0) > 0)
    logger.info(f"[SynthDatagen] Generated {len(samples)} samples ({retried} needed retries)")
    return samples


def epoch_sampler(
    corpora: Dict[str, Sequence[Any]],
    n_per_class: int,
    rng: np.random.Generator,
) -> List[Tuple[str, Any]]:
    """
    Stratified draw for one epoch.

    Each class contributes exactly ``n_per_class`` items, drawn without
    replacement (with replacement when the class has fewer items); the
    result is shuffled across classes.

    Args:
        corpora: Items per class
        n_per_class: Items drawn per class
        rng: Generator, typically derive_rng(seed, "epoch", epoch)

    Returns:
        List of (kind, item) pairs

    Raises:
        ConfigurationError: If a class has no items
    """
    if n_per_class <= 0:
        raise ConfigurationError(f"n_per_class must be positive, got {n_per_class}")
    stream: List[Tuple[str, Any]] = []
    for kind in sorted(corpora):
        items = corpora[kind]
        if len(items) == 0:
            raise ConfigurationError(f"Class '{kind}' has no samples")
        replace = len(items) < n_per_class
        chosen = rng.choice(len(items), size=n_per_class, replace=replace)
        stream.extend((kind, items[int(i)]) for i in chosen)
    order = rng.permutation(len(stream))
    return [stream[int(i)] for i in order]
