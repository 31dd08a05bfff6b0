"""Per-sample inference: posterior, anchor, fusion, mask, metrics."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, ShapeError
from .fusion import fuse, init_queries, predict_mask
from .metrics import segmentation_metrics, split_evaluate
from .scene_anchor import ATTRIBUTES, LinearHead, infer_scene_posterior, synthesize_anchor
from .transport import SinkhornConfig

HEADS_VERSION = 1


def save_heads(heads, path):
    data = {"version": HEADS_VERSION, "heads": {a: h.to_dict() for a, h in zip(ATTRIBUTES, heads)}}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_heads(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("version") != HEADS_VERSION:
        raise DataError(f"unsupported heads file version {data.get('version')!r}")
    try:
        return [LinearHead.from_dict(data["heads"][a]) for a in ATTRIBUTES]
    except KeyError as exc:
        raise DataError(f"heads file lacks attribute {exc}") from exc


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    combination: tuple
    prediction: np.ndarray
    soft: np.ndarray
    metrics: dict
    plans: tuple


@dataclass(frozen=True)
class TraversabilityPipeline:
    """Immutable inference context shared by every sample."""

    table: object
    heads: tuple
    config: SinkhornConfig = SinkhornConfig()
    fusion_lambda: float = 0.5
    projection: str = "row-normalized"
    pooling: str = "aggregate"

    def anchors(self, cls_embedding):
        return synthesize_anchor(infer_scene_posterior(cls_embedding, self.heads), self.table)

    def run(self, scene, keep_plans=False):
        try:
            anchors = self.anchors(scene.cls_embedding)
            details = fuse(
                scene.features_img,
                scene.features_normal,
                scene.probs_img,
                scene.probs_normal,
                anchors,
                lam=self.fusion_lambda,
                config=self.config,
                projection=self.projection,
                pooling=self.pooling,
                return_details=True,
            )
            masks = predict_mask(init_queries(anchors), details.fused)
        except (ShapeError, DataError) as exc:
            raise type(exc)(f"sample {scene.sample_id}: {exc}") from exc
        trav = masks[0]
        plans = (details.plan_img, details.plan_normal) if keep_plans else ()
        return SampleResult(
            scene.sample_id,
            scene.combination,
            trav.binary,
            trav.soft,
            segmentation_metrics(trav.binary, scene.ground_truth),
            plans,
        )

    def run_many(self, scenes, parallel=1, keep_plans=False):
        """Results in input order regardless of the worker count."""
        if parallel <= 1:
            return [self.run(s, keep_plans) for s in scenes]
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(lambda s: self.run(s, keep_plans), scenes))

    @staticmethod
    def report(results, scenes, train_combinations):
        truth = {s.sample_id: s.ground_truth for s in scenes}
        ordered = sorted(results, key=lambda r: r.sample_id)
        return split_evaluate(
            ((r.combination, r.prediction, truth[r.sample_id]) for r in ordered), train_combinations
        )
