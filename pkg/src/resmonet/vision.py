"""Image I/O, face-ROI preprocessing, 12-way augmentation, dataset handling.

Images are 8-bit RGB, row-major.  The native codec is binary PPM (P6),
which round-trips bit-exactly with no external dependencies.  Bilinear
resizing uses half-pixel centers (src = (dst + 0.5) * scale - 0.5) with
edge clamping and rounds half up to 8 bits.

Dataset splitting uses an xorshift64* generator (documented below) so the
same seed reproduces the same membership anywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, RangeError

log = logging.getLogger(__name__)

INPUT_SIDE = 224
_CORNER_CROP = 186
_CENTER_CROP = 148
_CORNER_OFF = INPUT_SIDE - _CORNER_CROP          # 38
_CENTER_OFF = (INPUT_SIDE - _CENTER_CROP) // 2   # 38


@dataclass
class Image:
    """8-bit RGB pixels, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DimensionError(f"image pixels must be (h, w, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise DimensionError(f"image pixels must be uint8, got {px.dtype}")
        self.pixels = np.ascontiguousarray(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise RangeError(f"face box must have positive size, got {self.w}x{self.h}")


@dataclass
class LabeledExample:
    image: Image
    label: int
    source_id: str


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    test: list[LabeledExample]
    seed: int


# ---------------------------------------------------------------------------
# PPM (P6) codec
# ---------------------------------------------------------------------------


def write_ppm(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(img.pixels.tobytes())


def _read_ppm_token(blob: bytes, off: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments between header tokens
    n = len(blob)
    while off < n:
        c = blob[off:off + 1]
        if c == b"#":
            while off < n and blob[off:off + 1] != b"\n":
                off += 1
        elif c.isspace():
            off += 1
        else:
            break
    start = off
    while off < n and not blob[off:off + 1].isspace():
        off += 1
    if start == off:
        raise DataError("truncated PPM header")
    return blob[start:off], off


def read_ppm(path) -> Image:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, off = _read_ppm_token(blob, 0)
    if magic != b"P6":
        raise DataError(f"not a binary PPM (P6) file: {path}")
    w, off = _read_ppm_token(blob, off)
    h, off = _read_ppm_token(blob, off)
    maxval, off = _read_ppm_token(blob, off)
    if int(maxval) != 255:
        raise DataError(f"only maxval 255 PPM supported, got {int(maxval)}")
    off += 1  # single whitespace byte after maxval
    w, h = int(w), int(h)
    need = w * h * 3
    data = blob[off:off + need]
    if len(data) != need:
        raise DataError(f"PPM pixel payload truncated: {len(data)} of {need} bytes")
    return Image(np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def crop_face(img: Image, box: FaceBox) -> Image:
    """Square crop around a detected box.

    The side is max(w, h), clamped to the image's smaller dimension; the
    window is centered on the box and shifted to stay inside the image.
    Pixels are copied verbatim.
    """
    if box.x < 0 or box.y < 0 or box.x + box.w > img.width or box.y + box.h > img.height:
        raise RangeError(
            f"box ({box.x},{box.y},{box.w},{box.h}) outside image "
            f"{img.width}x{img.height}")
    side = min(max(box.w, box.h), img.width, img.height)
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0
    x0 = int(round(cx - side / 2.0))
    y0 = int(round(cy - side / 2.0))
    x0 = max(0, min(x0, img.width - side))
    y0 = max(0, min(y0, img.height - side))
    return Image(img.pixels[y0:y0 + side, x0:x0 + side].copy())


def resize_bilinear(img: Image, side: int = INPUT_SIDE) -> Image:
    """Deterministic bilinear resize to side x side.

    Half-pixel mapping src = (dst + 0.5) * scale - 0.5, edge-clamped;
    values rounded half up.  An identity-scale resize is bit-exact.
    """
    if side < 1:
        raise RangeError(f"target side must be positive, got {side}")
    src = img.pixels.astype(np.float64)
    h, w = img.height, img.width
    ys = (np.arange(side) + 0.5) * (h / side) - 0.5
    xs = (np.arange(side) + 0.5) * (w / side) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    p00 = src[y0[:, None], x0[None, :]]
    p01 = src[y0[:, None], x1[None, :]]
    p10 = src[y1[:, None], x0[None, :]]
    p11 = src[y1[:, None], x1[None, :]]
    out = (p00 * (1 - fy) * (1 - fx) + p01 * (1 - fy) * fx
           + p10 * fy * (1 - fx) + p11 * fy * fx)
    return Image(np.floor(out + 0.5).astype(np.uint8))


def hflip(img: Image) -> Image:
    """Mirror around the vertical axis (bit-exact involution)."""
    return Image(np.ascontiguousarray(img.pixels[:, ::-1, :]))


def _crop_region(img: Image, x: int, y: int, side: int) -> Image:
    return Image(img.pixels[y:y + side, x:x + side].copy())


def _five_crops(img: Image) -> list[Image]:
    o = _CORNER_OFF
    return [
        resize_bilinear(_crop_region(img, 0, 0, _CORNER_CROP)),
        resize_bilinear(_crop_region(img, o, 0, _CORNER_CROP)),
        resize_bilinear(_crop_region(img, 0, o, _CORNER_CROP)),
        resize_bilinear(_crop_region(img, o, o, _CORNER_CROP)),
        resize_bilinear(_crop_region(img, _CENTER_OFF, _CENTER_OFF, _CENTER_CROP)),
    ]


def augment(img: Image) -> list[Image]:
    """The fixed 12-variant augmentation of a 224x224x3 image.

    Order: the original; its four 186-pixel corner crops at offsets (0,0),
    (38,0), (0,38), (38,38) resized back to 224; its 148-pixel center crop
    at (38,38) resized back; then the horizontally flipped image followed
    by the same five crop variants of the flipped image.  A left-right
    symmetric input therefore reproduces its first six variants exactly.
    """
    if img.pixels.shape != (INPUT_SIDE, INPUT_SIDE, 3):
        raise DimensionError(
            f"augmentation input must be {INPUT_SIDE}x{INPUT_SIDE}x3, "
            f"got {img.pixels.shape}")
    flipped = hflip(img)
    return [img] + _five_crops(img) + [flipped] + _five_crops(flipped)


def default_box(img: Image) -> FaceBox:
    """Fallback detector: the whole frame is the face region."""
    return FaceBox(0, 0, img.width, img.height)


def load_boxes(path) -> dict[str, FaceBox]:
    """Detection file: UTF-8 lines ``source_id x y w h``."""
    boxes: dict[str, FaceBox] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 'source_id x y w h'")
            boxes[parts[0]] = FaceBox(*(int(p) for p in parts[1:]))
    return boxes


def preprocess(img: Image, box: FaceBox | None = None, side: int = INPUT_SIDE) -> Image:
    """Crop the face region (whole frame if no box) and resize to the model input."""
    return resize_bilinear(crop_face(img, box or default_box(img)), side)


# ---------------------------------------------------------------------------
# Deterministic split
# ---------------------------------------------------------------------------


class Xorshift64Star:
    """xorshift64* generator: shifts 12/25/27, multiplier 0x2545F4914F6CDD1D.

    The seed is whitened through one splitmix64 step (adding the constant
    0x9E3779B97F4A7C15, then mixing with 0xBF58476D1CE4E5B9 and
    0x94D049BB133111EB) so seed 0 is usable.  Bounded draws use rejection
    sampling, so the shuffle below is unbiased and reproducible from the
    documented constants alone.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & self._MASK
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & self._MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & self._MASK

    def below(self, n: int) -> int:
        bound = ((1 << 64) // n) * n
        while True:
            v = self.next_u64()
            if v < bound:
                return v % n

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, high index down
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def split_dataset(examples: list[LabeledExample], seed: int,
                  train_fraction: float = 0.8,
                  augment_train: bool = False) -> DatasetSplit:
    """Seeded shuffle, then floor(train_fraction * n) examples to train.

    Source ids must be unique, so train and test are disjoint by id.  With
    ``augment_train`` the train subset is replaced by its 12-way augmented
    variants (inputs must then be 224x224x3); the test subset always keeps
    the original images.
    """
    if len(examples) < 2:
        raise ValueError(f"need at least 2 examples to split, got {len(examples)}")
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    ids = [e.source_id for e in examples]
    if len(set(ids)) != len(ids):
        raise ValueError("source ids must be unique for a disjoint split")
    order = list(examples)
    Xorshift64Star(seed).shuffle(order)
    n_train = int(len(order) * train_fraction)
    train, test = order[:n_train], order[n_train:]
    if augment_train:
        augmented = []
        for ex in train:
            for i, var in enumerate(augment(ex.image)):
                augmented.append(LabeledExample(var, ex.label,
                                                f"{ex.source_id}#aug{i}"))
        train = augmented
    return DatasetSplit(train=train, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Dataset directory loading
# ---------------------------------------------------------------------------


def list_classes(root) -> list[str]:
    """Class names = subdirectory names in lexicographic order."""
    root = Path(root)
    classes = sorted(d.name for d in root.iterdir() if d.is_dir())
    if not classes:
        raise DataError(f"no class directories under {root}")
    return classes


def load_dataset(root) -> list[LabeledExample]:
    """Load ``root/<class>/<image>.ppm``; labels follow sorted class order.

    Unsupported or unreadable files are skipped with a warning; an empty
    class directory stays registered (its label index is still assigned).
    """
    root = Path(root)
    classes = list_classes(root)
    examples: list[LabeledExample] = []
    for label, cls in enumerate(classes):
        entries = sorted(p for p in (root / cls).iterdir() if p.is_file())
        if not entries:
            log.warning("class directory %s is empty", root / cls)
        for path in entries:
            if path.suffix.lower() != ".ppm":
                log.warning("skipping unsupported file %s", path)
                continue
            try:
                img = read_ppm(path)
            except (DataError, OSError) as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
                continue
            examples.append(LabeledExample(img, label, f"{cls}/{path.name}"))
    return examples


def to_unit_floats(img: Image) -> np.ndarray:
    """Model input normalization: pixel / 255 into [0, 1], float32."""
    return (img.pixels.astype(np.float32) / np.float32(255.0))
