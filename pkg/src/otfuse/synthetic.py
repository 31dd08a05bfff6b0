"""Deterministic synthetic scenes for desk-scale experiments.

Each scene combination owns a CLS embedding built from one direction per
attribute category. Image features scatter around the scene's class
prototypes; normal features are derived from a depth map whose traversable
region is flat and whose obstacle region is a tilted plane.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .fileio import read_ftn, read_pbm, write_ftn, write_pbm
from .geometry import depth_to_normal
from .scene_anchor import ATTRIBUTES, LinearHead, PrototypeTable

DATASET_VERSION = 1
MANIFEST = "manifest.json"
TABLE_FILE = "prototypes.json"
SAMPLE_DIR = "samples"
BASE_DEPTH = 5.0


@dataclass(frozen=True)
class SceneBasis:
    """Orthonormal directions for categories plus the traversability axis."""

    category_dirs: dict
    meta_axis: np.ndarray

    def cls_mean(self, space, combo):
        idx = space.label_indices(combo)
        return sum(self.category_dirs[a][i] for a, i in zip(ATTRIBUTES, idx))


def make_basis(space, dim, rng):
    n_dirs = sum(space.sizes) + 1
    q, _ = np.linalg.qr(rng.standard_normal((dim, n_dirs)))
    cols = iter(q.T)
    dirs = {a: np.array([next(cols) for _ in space.categories(a)]) for a in ATTRIBUTES}
    return SceneBasis(dirs, next(cols))


def make_table(config, basis, rng):
    """Prototype table with ``prototype[s][k] = base(s) + meta[k]``.

    ``base(s)`` is a scaled sum of the combination's category directions,
    which is injective over combinations. The two meta vectors point in
    opposite directions along an axis orthogonal to every category.
    """
    space = config.attribute_space
    meta = np.stack([basis.meta_axis, -basis.meta_axis])
    base = np.array([0.3 * basis.cls_mean(space, c) / np.sqrt(3.0) for c in space.combinations()])
    prototypes = base[:, None, :] + meta[None, :, :]
    heads = {}
    for a in ATTRIBUTES:
        dirs = basis.category_dirs[a]
        noisy = dirs + config.text_noise * rng.standard_normal(dirs.shape) / np.sqrt(config.embedding_dim)
        heads[a] = LinearHead(noisy, config.temperature)
    return PrototypeTable(space, prototypes, meta, tuple(config.classes), heads)


@dataclass(frozen=True)
class RoadShape:
    """Trapezoidal road opening downwards from a horizon row."""

    horizon: int
    center: float
    top_half: float
    bottom_half: float

    @classmethod
    def sample(cls, h, w, rng):
        return cls(
            horizon=int(rng.integers(max(1, h // 4), max(2, h // 2))),
            center=w * rng.uniform(0.35, 0.65),
            top_half=w * rng.uniform(0.05, 0.15),
            bottom_half=w * rng.uniform(0.3, 0.5),
        )

    def _grid(self, h, w):
        ys, xs = np.mgrid[0:h, 0:w]
        frac = np.clip((ys - self.horizon) / max(h - 1 - self.horizon, 1), 0.0, 1.0)
        half = self.top_half + frac * (self.bottom_half - self.top_half)
        return ys, np.abs(xs + 0.5 - self.center) - half

    def mask(self, h, w):
        ys, lateral = self._grid(h, w)
        return (ys >= self.horizon) & (lateral <= 0)

    def height(self, h, w):
        """Zero on the road, growing with lateral offset and with height above
        the horizon; its gradient vanishes nowhere off the road."""
        ys, lateral = self._grid(h, w)
        return np.maximum(lateral, 0.0) + np.maximum(self.horizon - ys, 0)


def depth_map(road, h, w, slope):
    """Flat depth on the road, continuously rising terrain elsewhere."""
    return BASE_DEPTH + slope * road.height(h, w)


@dataclass
class SyntheticScene:
    sample_id: str
    combination: tuple
    cls_embedding: np.ndarray
    features_img: np.ndarray
    features_normal: np.ndarray
    probs_img: np.ndarray
    probs_normal: np.ndarray
    ground_truth: np.ndarray
    depth: np.ndarray
    normals: np.ndarray


def _preseg(mask, confidence):
    trav = np.where(mask, confidence, 1.0 - confidence)
    return np.stack([trav, 1.0 - trav])


def generate_scene(config, table, basis, combo, sample_id, rng):
    space = config.attribute_space
    h, w = config.grid
    dim = config.embedding_dim
    road = RoadShape.sample(h, w, rng)
    mask = road.mask(h, w)
    cls = basis.cls_mean(space, combo) + config.cls_noise * rng.standard_normal(dim)
    protos = table.prototype(combo)
    labels = np.where(mask, 0, 1)
    img = protos[labels] + config.feature_noise * rng.standard_normal((h, w, dim))

    depth = depth_map(road, h, w, config.obstacle_slope)
    normals = depth_to_normal(depth, config.focal_length, config.focal_length)
    flat_nz = 1.0
    tilted_nz = 1.0 / np.sqrt((config.focal_length * config.obstacle_slope) ** 2 + 1.0)
    upright = np.clip((normals[..., 2] - tilted_nz) / (flat_nz - tilted_nz), 0.0, 1.0)
    nrm = upright[..., None] * protos[0] + (1.0 - upright[..., None]) * protos[1]
    nrm = nrm + config.feature_noise * rng.standard_normal((h, w, dim))

    probs = _preseg(mask, config.preseg_confidence)
    return SyntheticScene(sample_id, tuple(combo), cls, img, nrm, probs, probs.copy(), mask, depth, normals)


def scene_plan(config):
    """``(sample_id, combination)`` pairs in weather-major order."""
    out = []
    n = 0
    for combo in config.attribute_space.combinations():
        for _ in range(config.samples_per_combination):
            out.append((f"s{n:05d}", combo))
            n += 1
    return out


def generate_dataset(config):
    """Basis, prototype table and every scene, all derived from ``config.seed``."""
    root = np.random.SeedSequence(config.seed)
    table_seq, *scene_seqs = root.spawn(1 + len(scene_plan(config)))
    table_rng = np.random.default_rng(table_seq)
    basis = make_basis(config.attribute_space, config.embedding_dim, table_rng)
    table = make_table(config, basis, table_rng)
    scenes = [
        generate_scene(config, table, basis, combo, sid, np.random.default_rng(seq))
        for (sid, combo), seq in zip(scene_plan(config), scene_seqs)
    ]
    return table, scenes


def _sample_files(sample_id):
    return {
        "cls": f"{SAMPLE_DIR}/{sample_id}_cls.ftn",
        "img": f"{SAMPLE_DIR}/{sample_id}_img.ftn",
        "normal": f"{SAMPLE_DIR}/{sample_id}_nrm.ftn",
        "probs_img": f"{SAMPLE_DIR}/{sample_id}_probs_img.ftn",
        "probs_normal": f"{SAMPLE_DIR}/{sample_id}_probs_nrm.ftn",
        "depth": f"{SAMPLE_DIR}/{sample_id}_depth.ftn",
        "ground_truth": f"{SAMPLE_DIR}/{sample_id}_gt.pbm",
    }


def write_dataset(config, table, scenes, out_dir):
    os.makedirs(os.path.join(out_dir, SAMPLE_DIR), exist_ok=True)
    table.save(os.path.join(out_dir, TABLE_FILE))
    space = config.attribute_space
    train = config.train_set()
    entries = []
    for sc in scenes:
        files = _sample_files(sc.sample_id)
        p = lambda key: os.path.join(out_dir, files[key])  # noqa: E731
        write_ftn(p("cls"), sc.cls_embedding.reshape(1, 1, -1))
        write_ftn(p("img"), sc.features_img)
        write_ftn(p("normal"), sc.features_normal)
        write_ftn(p("probs_img"), np.moveaxis(sc.probs_img, 0, -1))
        write_ftn(p("probs_normal"), np.moveaxis(sc.probs_normal, 0, -1))
        write_ftn(p("depth"), sc.depth[..., None])
        write_pbm(p("ground_truth"), sc.ground_truth)
        entries.append(
            {
                "id": sc.sample_id,
                "combination": space.key(sc.combination),
                "known": sc.combination in train,
                "files": files,
            }
        )
    manifest = {
        "version": DATASET_VERSION,
        # the output location is not a property of the data
        "config": {k: v for k, v in config.to_dict().items() if k != "out"},
        "n_samples": len(entries),
        "train_combinations": list(config.train_combinations),
        "samples": entries,
    }
    with open(os.path.join(out_dir, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(dataset_dir):
    path = os.path.join(dataset_dir, MANIFEST)
    if not os.path.isfile(path):
        raise DataError(f"no dataset manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != DATASET_VERSION:
        raise DataError(f"unsupported dataset version {manifest.get('version')!r}")
    return manifest


def load_table(dataset_dir):
    return PrototypeTable.load(os.path.join(dataset_dir, TABLE_FILE))


def _renormalized(probs):
    # float32 storage perturbs the per-pixel sums slightly
    probs = np.clip(probs, 0.0, 1.0)
    return probs / probs.sum(axis=0, keepdims=True)


def load_scene(dataset_dir, entry):
    """Read one manifest entry back into a :class:`SyntheticScene`."""
    f = {k: os.path.join(dataset_dir, v) for k, v in entry["files"].items()}
    try:
        cls = read_ftn(f["cls"]).reshape(-1)
        img = read_ftn(f["img"])
        nrm = read_ftn(f["normal"])
        probs_img = _renormalized(np.moveaxis(read_ftn(f["probs_img"]), -1, 0))
        probs_nrm = _renormalized(np.moveaxis(read_ftn(f["probs_normal"]), -1, 0))
        depth = read_ftn(f["depth"])[..., 0]
        gt = read_pbm(f["ground_truth"])
    except FileNotFoundError as exc:
        raise DataError(f"sample {entry['id']}: missing file {exc.filename}") from exc
    combo = tuple(entry["combination"].split("|"))
    return SyntheticScene(entry["id"], combo, cls, img, nrm, probs_img, probs_nrm, gt, depth, None)
