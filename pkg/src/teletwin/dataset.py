"""Synthetic instance-segmentation dataset: composite cutouts over backgrounds.

Each image overlays one augmented cutout per class at random positions and
depth order, resolves overlaps by mask subtraction, and is annotated in COCO
format with polygon segmentations traced from the visible masks.

Assets are optional: without a cutouts/backgrounds directory the generator
draws parametric instrument silhouettes and procedural backgrounds, so a desk
run needs no downloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .maskops import mask_bbox, rasterize_polygons, trace_polygons
from .scene import CLASS_NAMES

IMAGE_SIZE = (640, 480)
SCALE_RANGE = (0.5, 1.5)
MIN_VISIBLE_FRACTION = 0.10
PLACEMENT_RETRIES = 20
ALPHA_THRESHOLD = 128


class DatasetError(Exception):
    pass


class DegenerateScale(DatasetError):
    """Augmentation produced an empty mask."""


class PlacementFailed(DatasetError):
    """Could not place an instance with enough visible area."""


class MissingAssets(DatasetError):
    pass


@dataclass
class Cutout:
    cls: str
    image: Image.Image  # RGBA; alpha > 0 is the object mask

    def __post_init__(self):
        if self.image.mode != "RGBA":
            self.image = self.image.convert("RGBA")
        if not np.asarray(self.image)[..., 3].any():
            raise DatasetError(f"cutout for {self.cls} has empty alpha support")


@dataclass
class PlacedInstance:
    cls: str
    position: tuple  # top-left (x, y)
    z_order: int
    full_mask: np.ndarray
    visible_mask: np.ndarray | None = None
    rotation_deg: float = 0.0
    scale: float = 1.0
    reflected: bool = False


# --- procedural silhouettes ----------------------------------------------

def _blank(w, h):
    return Image.new("RGBA", (w, h), (0, 0, 0, 0))


def _draw_cell_scraper(d, rng):
    d.rectangle([44, 10, 56, 95], fill=(200, 190, 60, 255))
    d.rectangle([15, 95, 85, 118], fill=(220, 210, 80, 255))


def _draw_micro_test_tube(d, rng):
    d.rounded_rectangle([38, 18, 62, 80], radius=8, fill=(120, 180, 230, 255))
    d.polygon([(38, 78), (62, 78), (50, 104)], fill=(120, 180, 230, 255))
    d.rectangle([34, 8, 66, 22], fill=(80, 120, 200, 255))


def _draw_needle_holder(d, rng):
    d.line([(20, 14), (72, 110)], fill=(170, 170, 180, 255), width=11)
    d.line([(72, 14), (20, 110)], fill=(150, 150, 165, 255), width=11)
    d.ellipse([14, 104, 34, 122], fill=(150, 150, 165, 255))
    d.ellipse([60, 104, 80, 122], fill=(170, 170, 180, 255))


def _draw_pasteur_pipette(d, rng):
    d.polygon([(42, 8), (58, 8), (53, 70), (47, 70)], fill=(235, 225, 210, 255))
    d.ellipse([38, 64, 62, 96], fill=(235, 225, 210, 255))
    d.rectangle([47, 94, 53, 118], fill=(225, 215, 195, 255))


def _draw_pipettor(d, rng):
    d.rectangle([40, 6, 60, 22], fill=(60, 60, 70, 255))
    d.rounded_rectangle([34, 20, 66, 66], radius=7, fill=(90, 95, 110, 255))
    d.polygon([(42, 66), (58, 66), (52, 112), (48, 112)], fill=(200, 200, 210, 255))


def _draw_centrifuge_test_tube(d, rng):
    d.rectangle([39, 16, 61, 86], fill=(140, 200, 150, 255))
    d.polygon([(39, 86), (61, 86), (50, 112)], fill=(140, 200, 150, 255))
    d.rectangle([36, 6, 64, 20], fill=(70, 140, 90, 255))


def _draw_vacuum_test_tube(d, rng):
    d.rectangle([40, 20, 60, 92], fill=(180, 120, 170, 255))
    d.ellipse([40, 82, 60, 104], fill=(180, 120, 170, 255))
    d.rounded_rectangle([36, 6, 64, 26], radius=4, fill=(120, 60, 110, 255))


def _draw_swab(d, rng):
    d.rectangle([47, 24, 53, 116], fill=(210, 185, 150, 255))
    d.ellipse([41, 6, 59, 32], fill=(240, 235, 225, 255))


_DRAWERS = {
    "cell_scraper": _draw_cell_scraper,
    "micro_test_tube": _draw_micro_test_tube,
    "needle_holder": _draw_needle_holder,
    "pasteur_pipette": _draw_pasteur_pipette,
    "pipettor": _draw_pipettor,
    "centrifuge_test_tube": _draw_centrifuge_test_tube,
    "vacuum_test_tube": _draw_vacuum_test_tube,
    "swab": _draw_swab,
}


def procedural_cutout(cls: str, rng) -> Cutout:
    img = _blank(100, 128)
    _DRAWERS[cls](ImageDraw.Draw(img), rng)
    return Cutout(cls, img)


def procedural_background(index: int, size=IMAGE_SIZE) -> Image.Image:
    """Deterministic bench-like background: gradient plus soft blotches."""
    rng = np.random.default_rng((977, index))
    w, h = size
    base = rng.uniform(90, 170, size=3)
    tilt = rng.uniform(-40, 40, size=3)
    ys = np.linspace(0.0, 1.0, h)[:, None, None]
    img = base[None, None, :] + tilt[None, None, :] * ys
    img = np.broadcast_to(img, (h, w, 3)).copy()
    for _ in range(12):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        r = rng.uniform(30, 140)
        amp = rng.uniform(-25, 25, size=3)
        yy, xx = np.mgrid[0:h, 0:w]
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
        img += blob[..., None] * amp
    return Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), "RGB")


# --- asset loading ---------------------------------------------------------

def load_cutout_pool(cutouts_dir) -> dict:
    """class -> list of Cutout from <dir>/<class>/*.png; raises when a class is missing."""
    pool = {}
    root = Path(cutouts_dir)
    for cls in CLASS_NAMES:
        files = sorted((root / cls).glob("*.png"))
        if not files:
            raise MissingAssets(f"no cutouts for class {cls!r} under {root}")
        pool[cls] = [Cutout(cls, Image.open(p).convert("RGBA")) for p in files]
    return pool


def load_backgrounds(backgrounds_dir) -> list:
    files = sorted(Path(backgrounds_dir).glob("*.png")) + \
        sorted(Path(backgrounds_dir).glob("*.jpg"))
    if not files:
        raise MissingAssets(f"no background images under {backgrounds_dir}")
    return [Image.open(p).convert("RGB").resize(IMAGE_SIZE) for p in files]


# --- augmentation ----------------------------------------------------------

def augment(cutout: Cutout, rng) -> Cutout:
    """Random rotation [0, 360), scale [0.5, 1.5], reflection p=0.5."""
    angle = float(rng.uniform(0.0, 360.0))
    scale = float(rng.uniform(*SCALE_RANGE))
    reflect = bool(rng.random() < 0.5)
    return apply_transform(cutout, angle, scale, reflect)


def apply_transform(cutout: Cutout, angle: float, scale: float, reflect: bool) -> Cutout:
    img = cutout.image
    if reflect:
        img = img.transpose(Image.FLIP_LEFT_RIGHT)
    if scale != 1.0:
        w = max(1, round(img.width * scale))
        h = max(1, round(img.height * scale))
        img = img.resize((w, h), Image.BILINEAR)
    if angle != 0.0:
        img = img.rotate(angle, resample=Image.BILINEAR, expand=True)
    if not (np.asarray(img)[..., 3] >= ALPHA_THRESHOLD).any():
        raise DegenerateScale(f"transform emptied the {cutout.cls} mask")
    return Cutout(cutout.cls, img)


def cutout_mask(cutout: Cutout) -> np.ndarray:
    return np.asarray(cutout.image)[..., 3] >= ALPHA_THRESHOLD


# --- composition -----------------------------------------------------------

def resolve_occlusions(instances: list[PlacedInstance]) -> None:
    """visible(i) = full(i) minus everything stacked above it (higher z)."""
    order = sorted(instances, key=lambda p: p.z_order)
    cover = None
    for inst in reversed(order):  # top of the stack first
        if cover is None:
            inst.visible_mask = inst.full_mask.copy()
            cover = inst.full_mask.copy()
        else:
            inst.visible_mask = inst.full_mask & ~cover
            cover |= inst.full_mask


def _place(cutout: Cutout, rng, canvas_size) -> PlacedInstance:
    cw, ch = canvas_size
    iw, ih = cutout.image.size
    if iw > cw or ih > ch:
        raise PlacementFailed(f"{cutout.cls} cutout larger than the canvas")
    x = int(rng.integers(0, cw - iw + 1))
    y = int(rng.integers(0, ch - ih + 1))
    full = np.zeros((ch, cw), dtype=bool)
    full[y:y + ih, x:x + iw] = cutout_mask(cutout)
    return PlacedInstance(cls=cutout.cls, position=(x, y), z_order=0, full_mask=full)


def compose_image(background: Image.Image, cutouts: list[Cutout], rng):
    """Composite one augmented cutout per class; every instance keeps at least
    10% of its mask visible (placement retried, then PlacementFailed)."""
    if len(cutouts) != len(CLASS_NAMES) or len({c.cls for c in cutouts}) != len(CLASS_NAMES):
        raise DatasetError("compose_image needs exactly one cutout per class")
    canvas = background.convert("RGB").copy()
    if canvas.size != IMAGE_SIZE:
        canvas = canvas.resize(IMAGE_SIZE)

    instances = [_place(c, rng, canvas.size) for c in cutouts]
    for z, inst in zip(rng.permutation(len(instances)), instances):
        inst.z_order = int(z)
    resolve_occlusions(instances)

    retries = {inst.cls: 0 for inst in instances}
    while True:
        starved = [i for i in instances
                   if np.count_nonzero(i.visible_mask)
                   < MIN_VISIBLE_FRACTION * np.count_nonzero(i.full_mask)]
        if not starved:
            break
        worst = starved[0]
        if retries[worst.cls] >= PLACEMENT_RETRIES:
            raise PlacementFailed(f"{worst.cls} stayed under "
                                  f"{MIN_VISIBLE_FRACTION:.0%} visible after "
                                  f"{PLACEMENT_RETRIES} retries")
        retries[worst.cls] += 1
        cut = next(c for c in cutouts if c.cls == worst.cls)
        fresh = _place(cut, rng, canvas.size)
        worst.position = fresh.position
        worst.full_mask = fresh.full_mask
        resolve_occlusions(instances)

    for inst in sorted(instances, key=lambda p: p.z_order):
        cut = next(c for c in cutouts if c.cls == inst.cls)
        canvas.paste(cut.image, inst.position, cut.image)
    return canvas, instances


# --- COCO annotation -------------------------------------------------------

def categories() -> list[dict]:
    return [{"id": i + 1, "name": name, "supercategory": "lab_instrument"}
            for i, name in enumerate(CLASS_NAMES)]


CATEGORY_IDS = {name: i + 1 for i, name in enumerate(CLASS_NAMES)}


class EmptyMask(DatasetError):
    pass


def annotate(instances: list[PlacedInstance], image_id: int, start_ann_id: int) -> list[dict]:
    """COCO annotation records from the visible masks (polygon segmentation)."""
    records = []
    ann_id = start_ann_id
    for inst in sorted(instances, key=lambda p: p.z_order):
        mask = inst.visible_mask
        if mask is None or not mask.any():
            raise EmptyMask(f"{inst.cls} has no visible pixels")
        polygons = [np.round(p, 2).ravel().tolist() for p in trace_polygons(mask)]
        records.append({
            "id": ann_id,
            "image_id": image_id,
            "category_id": CATEGORY_IDS[inst.cls],
            "segmentation": polygons,
            "bbox": list(mask_bbox(mask)),
            "area": int(np.count_nonzero(mask)),
            "iscrowd": 0,
        })
        ann_id += 1
    return records


# --- dataset generation ----------------------------------------------------

@dataclass
class SynthConfig:
    n_images: int = 80
    split: float = 0.75
    seed: int = 0
    backgrounds_dir: str | None = None
    cutouts_dir: str | None = None
    out_dir: str = "dataset"


def _image_rng(seed: int, index: int):
    return np.random.default_rng((seed, index))


def generate(cfg: SynthConfig, inspect=None) -> tuple[dict, dict]:
    """Write images + train/test COCO files + manifest; returns the two docs.

    inspect, when given, is called with (index, image, instances) after each
    composition; used by validation suites to audit the per-image masks.
    """
    out = Path(cfg.out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    pool = load_cutout_pool(cfg.cutouts_dir) if cfg.cutouts_dir else None
    backgrounds = (load_backgrounds(cfg.backgrounds_dir) if cfg.backgrounds_dir
                   else [procedural_background(i) for i in range(10)])

    n_train = int(round(cfg.n_images * cfg.split))
    docs = {
        "train": {"images": [], "annotations": [], "categories": categories()},
        "test": {"images": [], "annotations": [], "categories": categories()},
    }
    ann_id = 1
    for idx in range(cfg.n_images):
        rng = _image_rng(cfg.seed, idx)
        bg = backgrounds[int(rng.integers(0, len(backgrounds)))]
        cuts = []
        for cls in CLASS_NAMES:
            base = (pool[cls][int(rng.integers(0, len(pool[cls])))] if pool
                    else procedural_cutout(cls, rng))
            cuts.append(augment(base, rng))
        image, instances = compose_image(bg, cuts, rng)
        if inspect is not None:
            inspect(idx, image, instances)

        name = f"img_{idx:05d}.png"
        image.save(img_dir / name)
        split = "train" if idx < n_train else "test"
        doc = docs[split]
        doc["images"].append({"id": idx, "file_name": name,
                              "width": image.width, "height": image.height})
        records = annotate(instances, idx, ann_id)
        ann_id += len(records)
        doc["annotations"].extend(records)

    for split in ("train", "test"):
        with open(out / f"{split}.json", "w") as f:
            json.dump(docs[split], f, sort_keys=True, separators=(",", ":"))
    with open(out / "manifest.json", "w") as f:
        json.dump({"seed": cfg.seed, "n_images": cfg.n_images, "split": cfg.split,
                   "train_images": n_train, "test_images": cfg.n_images - n_train,
                   "image_size": list(IMAGE_SIZE)},
                  f, sort_keys=True, indent=2)
    return docs["train"], docs["test"]


def rasterize_annotation(ann: dict, shape) -> np.ndarray:
    """Mask from a COCO record: polygon list or uncompressed RLE."""
    seg = ann["segmentation"]
    if isinstance(seg, dict):
        from .maskops import decode_coco_rle
        return decode_coco_rle(seg["counts"], seg["size"])
    polys = [np.asarray(p, dtype=float).reshape(-1, 2) for p in seg]
    return rasterize_polygons(polys, shape)
