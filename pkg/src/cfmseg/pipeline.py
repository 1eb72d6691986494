"""End-to-end inference and evaluation.

Scoring computes each scale's convolutional map once per image and reuses it
for every proposal assigned to that scale; the benchmark times exactly that
reuse against per-region crop-and-warp recomputation.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import LinearModel, score, train_svm
from .core import (
    BinaryMask,
    FeatureMap,
    InstanceSegment,
    LabelMap,
    PixelBox,
    SegmentProposal,
    ValidationError,
    mask_iou,
    proposal_from_mask,
    resize_nearest,
)
from .netgeom import NetGeometry, feature_extent
from .pooling import PyramidSpec, design_a_features, design_b_features, spp_pool
from .pursuit import PursuitConfig, label_object_samples, stuff_samples
from . import toynet

DESIGNS = ("A", "B", "none")  # "none" is the unmasked (box-only) ablation
SCALE_TARGET_AREA = 224 * 224


@dataclass(frozen=True)
class PipelineConfig:
    scales: tuple[int, ...] = (480, 576, 688, 864, 1200)
    paste_inhibit_iou: float = 0.3
    design: str = "B"
    pyramid: PyramidSpec = field(default_factory=PyramidSpec)
    warp_side: int = 224  # crop-and-warp resolution of the benchmark baseline
    # L2-normalize feature vectors fed to the classifiers; keeps margins
    # comparable across categories and segment sizes
    normalize_features: bool = True

    def __post_init__(self):
        scales = tuple(int(s) for s in self.scales)
        if not scales or list(scales) != sorted(scales) or scales[0] < 1:
            raise ValidationError(f"scales must be ascending positives: {self.scales}")
        if not 0.0 < self.paste_inhibit_iou < 1.0:
            raise ValidationError(f"paste inhibition {self.paste_inhibit_iou}")
        if self.design not in DESIGNS:
            raise ValidationError(f"design must be one of {DESIGNS}")
        if self.warp_side < 1:
            raise ValidationError("warp side must be >= 1")
        object.__setattr__(self, "scales", scales)


@dataclass(frozen=True, eq=False)
class ScoredRegion:
    proposal: SegmentProposal
    category: int
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValidationError("region score must be finite")


def assign_scale(box: PixelBox, image_shorter_edge: int, scales) -> int:
    """Scale whose resized box area lands nearest the 224^2 reference area."""
    if not scales:
        raise ValidationError("scale list must be non-empty")
    if image_shorter_edge < 1:
        raise ValidationError("image shorter edge must be >= 1")
    best_scale = None
    best_err = None
    for s in sorted(scales):
        f = s / image_shorter_edge
        err = abs(box.area * f * f - SCALE_TARGET_AREA)
        if best_err is None or err < best_err:
            best_scale, best_err = s, err
    return best_scale


def scale_image(image: FeatureMap, scale: int) -> FeatureMap:
    """Nearest-neighbor resize so the shorter edge equals the scale."""
    h, w = image.height, image.width
    if h <= w:
        out_h, out_w = scale, max(1, round(w * scale / h))
    else:
        out_h, out_w = max(1, round(h * scale / w)), scale
    if (out_h, out_w) == (h, w):
        return image
    return FeatureMap(resize_nearest(image.values, out_h, out_w))


def scale_proposal(
    p: SegmentProposal, src_h: int, src_w: int, dst_h: int, dst_w: int
) -> SegmentProposal:
    if (src_h, src_w) == (dst_h, dst_w):
        return p
    bits = resize_nearest(p.mask.bits, dst_h, dst_w)
    if not bits.any():
        # a thin segment can vanish under heavy downscale; fall back to its box
        bits = np.zeros((dst_h, dst_w), dtype=bool)
        x0 = min(p.box.x0 * dst_w // src_w, dst_w - 1)
        x1 = min(p.box.x1 * dst_w // src_w, dst_w - 1)
        y0 = min(p.box.y0 * dst_h // src_h, dst_h - 1)
        y1 = min(p.box.y1 * dst_h // src_h, dst_h - 1)
        bits[y0 : y1 + 1, x0 : x1 + 1] = True
    return proposal_from_mask(p.id, BinaryMask(bits))


class FeatureCache:
    """Per-image cache of scaled convolutional maps, computed at most once each."""

    def __init__(self, image: FeatureMap, net: toynet.ToyNet):
        self.image = image
        self.net = net
        self.forward_count = 0
        self._maps: dict[int, tuple[FeatureMap, tuple[int, int]]] = {}

    def conv_map(self, scale: int) -> tuple[FeatureMap, tuple[int, int]]:
        if scale not in self._maps:
            scaled = scale_image(self.image, scale)
            conv = toynet.forward(self.net, scaled)
            self.forward_count += 1
            self._maps[scale] = (conv, (scaled.height, scaled.width))
        return self._maps[scale]


def design_feature(
    conv: FeatureMap,
    p: SegmentProposal,
    g: NetGeometry,
    pyr: PyramidSpec,
    design: str,
) -> np.ndarray:
    if design == "A":
        box_f, seg_f = design_a_features(conv, p, g, pyr)
        return np.concatenate([box_f.values, seg_f.values])
    if design == "B":
        return design_b_features(conv, p, g, pyr).values
    if design == "none":
        window = feature_extent(g, p.box, conv.height, conv.width)
        return spp_pool(conv, window, pyr).values
    raise ValidationError(f"design must be one of {DESIGNS}")


def feature_length(channels: int, pyr: PyramidSpec, design: str) -> int:
    base = pyr.output_length(channels)
    return 2 * base if design == "A" else base


def _map_ordered(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def proposal_features(
    proposals: list[SegmentProposal],
    cache: FeatureCache,
    g: NetGeometry,
    cfg: PipelineConfig,
    threads: int = 1,
) -> list[np.ndarray]:
    """Per-proposal design feature vectors, conv maps shared per scale."""
    image = cache.image
    shorter = min(image.height, image.width)
    scales = [assign_scale(p.box, shorter, cfg.scales) for p in proposals]
    for s in sorted(set(scales)):
        cache.conv_map(s)  # populate serially so threads only read

    def one(arg):
        p, s = arg
        conv, (sh, sw) = cache.conv_map(s)
        sp = scale_proposal(p, image.height, image.width, sh, sw)
        vec = design_feature(conv, sp, g, cfg.pyramid, cfg.design)
        if cfg.normalize_features:
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if norm > 0.0:
                vec = (vec / norm).astype(np.float32)
        return vec

    return _map_ordered(one, list(zip(proposals, scales)), threads)


def score_proposals(
    models: list[LinearModel],
    proposals: list[SegmentProposal],
    image: FeatureMap,
    net: toynet.ToyNet,
    g: NetGeometry,
    cfg: PipelineConfig,
    cache: FeatureCache | None = None,
    threads: int = 1,
) -> list[ScoredRegion]:
    """Score every proposal against every category model."""
    expected = feature_length(net.spec.out_channels, cfg.pyramid, cfg.design)
    for m in models:
        if m.weights.size != expected:
            raise ValidationError(
                f"model for category {m.category} has length {m.weights.size}, "
                f"design {cfg.design!r} produces {expected}"
            )
    if cache is None:
        cache = FeatureCache(image, net)
    features = proposal_features(proposals, cache, g, cfg, threads=threads)
    return [
        ScoredRegion(p, m.category, score(m, vec))
        for p, vec in zip(proposals, features)
        for m in models
    ]


def paste(
    scored: list[ScoredRegion], height: int, width: int, cfg: PipelineConfig
) -> LabelMap:
    """Greedy labeling: best score first, overlap inhibition, first write wins."""
    for r in scored:
        if (r.proposal.mask.height, r.proposal.mask.width) != (height, width):
            raise ValidationError(
                f"proposal {r.proposal.id!r} mask does not match {height}x{width}"
            )
    queue = sorted(
        (r for r in scored if r.score > 0),
        key=lambda r: (-r.score, r.proposal.id, r.category),
    )
    labels = np.zeros((height, width), dtype=np.uint16)
    while queue:
        top, rest = queue[0], queue[1:]
        labels[top.proposal.mask.bits & (labels == 0)] = top.category
        queue = [
            r
            for r in rest
            if mask_iou(r.proposal.mask, top.proposal.mask) <= cfg.paste_inhibit_iou
        ]
    return LabelMap(labels)


def mean_iou(
    preds: list[LabelMap], gts: list[LabelMap], num_categories: int
) -> tuple[np.ndarray, float]:
    """Dataset-global per-category IoU and the mean over present categories."""
    if len(preds) != len(gts):
        raise ValidationError("prediction and ground-truth counts differ")
    if num_categories < 1:
        raise ValidationError("need at least one category")
    inter = np.zeros(num_categories, dtype=np.int64)
    union = np.zeros(num_categories, dtype=np.int64)
    for p, g in zip(preds, gts):
        if (p.height, p.width) != (g.height, g.width):
            raise ValidationError(
                f"prediction {p.height}x{p.width} vs ground truth {g.height}x{g.width}"
            )
        p.check_categories(num_categories)
        g.check_categories(num_categories)
        for c in range(num_categories):
            pc = p.labels == c
            gc = g.labels == c
            inter[c] += np.count_nonzero(pc & gc)
            union[c] += np.count_nonzero(pc | gc)
    present = union > 0
    ious = np.full(num_categories, np.nan)
    ious[present] = inter[present] / union[present]
    return ious, float(np.mean(ious[present]))


# ---------------------------------------------------------------------------
# Training orchestration (per-category sample pools -> linear models)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainScene:
    image: FeatureMap
    labels: LabelMap
    instances: list[InstanceSegment]
    proposals: list[SegmentProposal]


def collect_training_pools(
    scenes: list[TrainScene],
    object_categories: list[int],
    stuff_categories: list[int],
    net: toynet.ToyNet,
    g: NetGeometry,
    cfg: PipelineConfig,
    pursuit_cfg: PursuitConfig,
    threads: int = 1,
) -> dict[int, tuple[list[np.ndarray], list[np.ndarray]]]:
    """Positive/negative feature pools per category over a scene corpus.

    Object positives are the ground-truth segments themselves; object
    negatives are proposals overlapping an instance by [0.1, 0.3] IoU.
    Stuff positives come from deterministic pursuit; stuff negatives are
    proposals with purity below the negative threshold.
    """
    pools: dict[int, tuple[list, list]] = {
        c: ([], []) for c in [*object_categories, *stuff_categories]
    }
    for scene in scenes:
        cache = FeatureCache(scene.image, net)
        features = proposal_features(scene.proposals, cache, g, cfg, threads=threads)
        by_id = {p.id: vec for p, vec in zip(scene.proposals, features)}

        for c in object_categories:
            pos, neg = pools[c]
            gt_props = [
                proposal_from_mask(f"gt_{c}_{i}", inst.mask)
                for i, inst in enumerate(scene.instances)
                if inst.category == c
            ]
            if gt_props:
                pos.extend(
                    proposal_features(gt_props, cache, g, cfg, threads=threads)
                )
            for sample in label_object_samples(
                scene.proposals, scene.instances, c
            ):
                if sample.label < 0:
                    neg.append(by_id[sample.proposal.id])

        for c in stuff_categories:
            pos, neg = pools[c]
            stuff_gt = BinaryMask(scene.labels.labels == c)
            if not stuff_gt.bits.any():
                continue
            picked, rejected = stuff_samples(
                scene.proposals, stuff_gt, pursuit_cfg, mode="deterministic"
            )
            pos.extend(by_id[p.id] for p in picked)
            neg.extend(by_id[p.id] for p in rejected)
    return pools


def train_category_models(
    scenes: list[TrainScene],
    object_categories: list[int],
    stuff_categories: list[int],
    net: toynet.ToyNet,
    g: NetGeometry,
    cfg: PipelineConfig,
    pursuit_cfg: PursuitConfig | None = None,
    reg: float = 1e-4,
    epochs: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> list[LinearModel]:
    if pursuit_cfg is None:
        pursuit_cfg = PursuitConfig()
    pools = collect_training_pools(
        scenes, object_categories, stuff_categories, net, g, cfg, pursuit_cfg,
        threads=threads,
    )
    models = []
    for c in sorted(pools):
        pos, neg = pools[c]
        model, _ = train_svm(
            pos, neg, reg=reg, epochs=epochs, seed=seed + c, category=c
        )
        models.append(model)
    return models


def predict_scene(
    models: list[LinearModel],
    scene_image: FeatureMap,
    proposals: list[SegmentProposal],
    net: toynet.ToyNet,
    g: NetGeometry,
    cfg: PipelineConfig,
    threads: int = 1,
) -> LabelMap:
    scored = score_proposals(
        models, proposals, scene_image, net, g, cfg, threads=threads
    )
    return paste(scored, scene_image.height, scene_image.width, cfg)


# ---------------------------------------------------------------------------
# Conv-once vs per-region benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkReport:
    proposals: int
    conv_once_ms: float
    masking_ms: float
    per_region_ms: float
    ratio: float
    threads: int

    def as_dict(self) -> dict:
        return {
            "proposals": self.proposals,
            "conv_once_ms": self.conv_once_ms,
            "masking_ms": self.masking_ms,
            "per_region_ms": self.per_region_ms,
            "ratio": self.ratio,
            "threads": self.threads,
        }


def benchmark(
    image: FeatureMap,
    proposals: list[SegmentProposal],
    net: toynet.ToyNet,
    g: NetGeometry,
    cfg: PipelineConfig,
    threads: int = 1,
) -> BenchmarkReport:
    """Wall-clock comparison of shared-map masking vs per-region recomputation.

    Proposal generation and I/O stay outside the timed sections; the shared
    path's outputs are recomputed once and checked for exact repeatability.
    """
    if not proposals:
        raise ValidationError("benchmark needs at least one proposal")

    t0 = time.perf_counter()
    conv = toynet.forward(net, image)
    conv_once_ms = (time.perf_counter() - t0) * 1000.0

    def mask_one(p: SegmentProposal) -> np.ndarray:
        return design_feature(conv, p, g, cfg.pyramid, cfg.design)

    t0 = time.perf_counter()
    shared = _map_ordered(mask_one, proposals, threads)
    masking_ms = (time.perf_counter() - t0) * 1000.0

    repeat = _map_ordered(mask_one, proposals, threads)
    for a, b in zip(shared, repeat):
        if not np.array_equal(a, b):
            raise RuntimeError("shared-map features changed across repeats")

    def region_one(p: SegmentProposal) -> np.ndarray:
        fm = toynet.forward_region(net, image, p.box, cfg.warp_side)
        window = PixelBox(0, 0, fm.width - 1, fm.height - 1)
        return spp_pool(fm, window, cfg.pyramid).values

    t0 = time.perf_counter()
    _map_ordered(region_one, proposals, threads)
    per_region_ms = (time.perf_counter() - t0) * 1000.0

    ratio = per_region_ms / (conv_once_ms + masking_ms)
    return BenchmarkReport(
        len(proposals), conv_once_ms, masking_ms, per_region_ms, ratio, threads
    )
