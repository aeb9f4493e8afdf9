"""Synthetic part-scene generator and on-disk image datasets."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..types import ConceptMaskSet, ValidationError

SHAPES = ("disk", "bar", "triangle")
TEXTURES = ("flat", "noise", "stripes")


@dataclass
class PartSpec:
    name: str
    shape: str
    color: tuple
    size_range: tuple
    anchor: tuple  # (row, col) in pixels
    jitter: float = 3.0


@dataclass
class SyntheticSceneSpec:
    canvas_size: int = 64
    parts: list = field(default_factory=list)
    background: str = "noise"
    num_classes: int = 2
    class_part_table: list = field(default_factory=list)
    object_jitter: float = 6.0
    color_jitter: float = 0.1

    def __post_init__(self):
        self.parts = [p if isinstance(p, PartSpec) else PartSpec(**p) for p in self.parts]
        for p in self.parts:
            p.color = tuple(p.color)
            p.size_range = tuple(p.size_range)
            p.anchor = tuple(p.anchor)
        self.validate()

    @property
    def concept_names(self) -> list:
        return ["background"] + [p.name for p in self.parts]

    def validate(self) -> None:
        names = [p.name for p in self.parts]
        if len(set(names)) != len(names):
            raise ValidationError("part names must be unique")
        if self.background not in TEXTURES:
            raise ValidationError(f"unknown background texture {self.background!r}")
        for p in self.parts:
            if p.shape not in SHAPES:
                raise ValidationError(f"unknown shape {p.shape!r} for part {p.name}")
            reach = p.jitter + self.object_jitter + max(p.size_range)
            r, c = p.anchor
            if min(r, c) - reach < 0 or max(r, c) + reach > self.canvas_size:
                raise ValidationError(f"part {p.name} cannot fit the canvas at maximal jitter")
        if len(self.class_part_table) != self.num_classes:
            raise ValidationError("class_part_table needs one entry per class")
        sets = []
        for c, row in enumerate(self.class_part_table):
            unknown = set(row) - set(names)
            if unknown:
                raise ValidationError(f"class {c} uses unknown parts {sorted(unknown)}")
            if not row:
                raise ValidationError(f"class {c} has no parts")
            sets.append(frozenset(row))
        if len(set(sets)) < len(sets):
            warnings.warn("classes indistinguishable: identical part sets", stacklevel=2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSceneSpec":
        return cls(**data)


def default_spec(num_classes: int = 2, canvas_size: int = 64) -> SyntheticSceneSpec:
    """Head/torso/tail scenes; class membership is decided by which parts appear."""
    s = canvas_size / 64.0
    parts = [
        PartSpec("head", "disk", (0.9, 0.2, 0.2), (6 * s, 9 * s), (20 * s, 22 * s), 3 * s),
        PartSpec("torso", "bar", (0.2, 0.8, 0.3), (10 * s, 13 * s), (34 * s, 32 * s), 3 * s),
        PartSpec("tail", "triangle", (0.2, 0.3, 0.9), (7 * s, 9 * s), (44 * s, 44 * s), 3 * s),
    ]
    if num_classes == 2:
        table = [["head", "torso"], ["head", "torso", "tail"]]
    elif num_classes == 3:
        table = [["head", "torso"], ["torso", "tail"], ["head", "tail"]]
    else:
        raise ValidationError("default_spec only covers 2 or 3 classes")
    return SyntheticSceneSpec(canvas_size, parts, "noise", num_classes, table, 6 * s)


def _shape_mask(shape, size, center, yy, xx):
    cy, cx = center
    if shape == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= size ** 2
    if shape == "bar":
        return (np.abs(yy - cy) <= size / 3.0) & (np.abs(xx - cx) <= size)
    # upward triangle with apex at cy - size, base at cy + size
    top = cy - size
    frac = (yy - top) / (2.0 * size)
    return (frac >= 0) & (frac <= 1) & (np.abs(xx - cx) <= frac * size)


def _background(kind, rng, H, W, yy, xx):
    base = rng.uniform(0.35, 0.65)
    if kind == "flat":
        img = np.full((3, H, W), base)
    elif kind == "noise":
        img = base + 0.08 * rng.standard_normal((3, H, W))
    else:
        freq = rng.uniform(0.15, 0.4)
        angle = rng.uniform(0, np.pi)
        wave = np.sin(freq * (np.cos(angle) * xx + np.sin(angle) * yy) + rng.uniform(0, 2 * np.pi))
        img = base + 0.1 * wave[None] + 0.03 * rng.standard_normal((3, H, W))
    return img


@dataclass
class ImageDataset:
    """Images ``[n, 3, H, W]`` in [0, 1] with integer labels and optional label maps."""

    images: np.ndarray
    labels: np.ndarray
    label_maps: Optional[np.ndarray] = None
    concept_names: Optional[list] = None
    image_ids: Optional[list] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.image_ids is None:
            self.image_ids = [f"img{i:05d}" for i in range(len(self.labels))]
        if len(self.images) != len(self.labels):
            raise ValidationError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[2:])

    @property
    def has_masks(self) -> bool:
        return self.label_maps is not None and self.concept_names is not None

    def concept_masks(self, mode: str = "parts") -> ConceptMaskSet:
        """Concept masks; ``object-background`` gives ``2C`` concepts ``{object-c, background-c}``."""
        if not self.has_masks:
            raise ValidationError("dataset has no masks")
        if mode == "parts":
            return ConceptMaskSet.from_label_maps(self.label_maps, self.concept_names)
        if mode == "object-background":
            C = int(self.labels.max()) + 1
            fg = self.label_maps > 0
            idx = 2 * self.labels[:, None, None] + np.where(fg, 0, 1)
            names = [n for c in range(C) for n in (f"object-{c}", f"background-{c}")]
            return ConceptMaskSet.from_label_maps(idx, names)
        raise ValidationError(f"unknown concept mode {mode!r}")

    def subset(self, idx) -> "ImageDataset":
        idx = np.asarray(idx)
        return ImageDataset(
            self.images[idx],
            self.labels[idx],
            None if self.label_maps is None else self.label_maps[idx],
            self.concept_names,
            [self.image_ids[i] for i in idx],
        )


def generate_synthetic(spec: SyntheticSceneSpec, n: int, seed: int = 0) -> ImageDataset:
    """Render ``n`` scenes with pixel-exact part masks (label 0 is background)."""
    rng = np.random.default_rng(seed)
    H = W = int(spec.canvas_size)
    yy, xx = np.mgrid[0:H, 0:W].astype(float) + 0.5
    index = {p.name: j for j, p in enumerate(spec.parts)}
    images = np.empty((n, 3, H, W), dtype=np.float32)
    maps = np.zeros((n, H, W), dtype=np.int64)
    labels = rng.integers(0, spec.num_classes, size=n)
    for k in range(n):
        img = _background(spec.background, rng, H, W, yy, xx)
        lab = np.zeros((H, W), dtype=np.int64)
        shift = rng.uniform(-1, 1, size=2) * spec.object_jitter / np.sqrt(2)
        present = set(spec.class_part_table[labels[k]])
        for p in spec.parts:
            if p.name not in present:
                continue
            offset = rng.uniform(-1, 1, size=2) * p.jitter / np.sqrt(2)
            center = np.asarray(p.anchor, dtype=float) + shift + offset
            size = rng.uniform(*p.size_range)
            m = _shape_mask(p.shape, size, center, yy, xx)
            color = np.clip(np.asarray(p.color) + spec.color_jitter * rng.standard_normal(3), 0, 1)
            img[:, m] = color[:, None]
            lab[m] = index[p.name] + 1
        images[k] = np.clip(img, 0, 1)
        maps[k] = lab
    return ImageDataset(images, labels, maps, spec.concept_names)


# on-disk layout: images/<id>.png, labels.csv (image_id,label), masks/<id>.png, concepts.json


def save_dataset(ds: ImageDataset, out_dir, spec: Optional[SyntheticSceneSpec] = None) -> Path:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image_id", "label"])
        for iid, lab in zip(ds.image_ids, ds.labels):
            w.writerow([iid, int(lab)])
    for iid, img in zip(ds.image_ids, ds.images):
        arr = (np.transpose(img, (1, 2, 0)) * 255).round().astype(np.uint8)
        Image.fromarray(arr).save(out / "images" / f"{iid}.png")
    if ds.has_masks:
        (out / "masks").mkdir(exist_ok=True)
        for iid, lab in zip(ds.image_ids, ds.label_maps):
            Image.fromarray(lab.astype(np.uint8)).save(out / "masks" / f"{iid}.png")
        concepts = {str(i): name for i, name in enumerate(ds.concept_names)}
        (out / "concepts.json").write_text(json.dumps(concepts, indent=2))
    if spec is not None:
        (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
    return out


def load_label_map(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.int64)
    return np.asarray(Image.open(path), dtype=np.int64)


def load_masks(mask_dir, image_ids, merge: Optional[dict] = None, size=None):
    """Read per-image integer label maps and merge raw labels into concepts.

    ``merge`` maps raw label (as string or int) to a concept name; labels that
    share a name become one concept. Concepts are ordered by first appearance
    in ``merge``. Without ``merge`` each raw label is its own concept.
    Returns ``(label_maps [n, H, W], concept_names)``.
    """
    mask_dir = Path(mask_dir)
    raw = []
    for iid in image_ids:
        hits = sorted(mask_dir.glob(f"{iid}.*"))
        if not hits:
            raise ValidationError(f"no mask for image {iid} in {mask_dir}")
        lab = load_label_map(hits[0])
        if size is not None and lab.shape != tuple(size):
            im = Image.fromarray(lab.astype(np.int32)).resize((size[1], size[0]), Image.NEAREST)
            lab = np.asarray(im, dtype=np.int64)
        raw.append(lab)
    raw = np.stack(raw)
    if merge is None:
        values = np.unique(raw)
        merge = {int(v): str(v) for v in values}
    names = []
    for name in merge.values():
        if name not in names:
            names.append(name)
    lut = {int(k): names.index(v) for k, v in merge.items()}
    missing = set(np.unique(raw).tolist()) - set(lut)
    if missing:
        raise ValidationError(f"raw labels {sorted(missing)} not covered by the merge config")
    out = np.zeros_like(raw)
    for k, v in lut.items():
        out[raw == k] = v
    return out, names


def load_image_dir(root, image_size=None, merge: Optional[dict] = None) -> ImageDataset:
    """Load ``images/``, ``labels.csv`` and, if present, ``masks/`` from ``root``."""
    root = Path(root)
    ids, labels = [], []
    with open(root / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["image_id"])
            labels.append(int(row["label"]))
    imgs = []
    for iid in ids:
        hits = sorted((root / "images").glob(f"{iid}.*"))
        if not hits:
            raise ValidationError(f"missing image {iid}")
        im = Image.open(hits[0]).convert("RGB")
        if image_size is not None and im.size != (image_size, image_size):
            im = im.resize((image_size, image_size), Image.BILINEAR)
        imgs.append(np.transpose(np.asarray(im, dtype=np.float32) / 255.0, (2, 0, 1)))
    images = np.stack(imgs)
    maps, names = None, None
    if (root / "masks").is_dir():
        if merge is None and (root / "concepts.json").exists():
            merge = json.loads((root / "concepts.json").read_text())
        maps, names = load_masks(root / "masks", ids, merge, images.shape[2:])
    return ImageDataset(images, np.asarray(labels), maps, names, ids)
