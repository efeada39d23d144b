"""Procedural 7-class stand-in dataset.

Real face corpora are license-restricted, so desk-scale training runs on
generated images instead: each class is a distinct geometric pattern
(stripes, checkerboard, disk, cross, flat), rendered with a random
foreground/background palette per image so that color alone carries no
class signal, plus per-pixel noise and random phase/position jitter.

``python -m resmonet.synthetic OUTDIR`` writes a dataset directory with
one subdirectory per emotion name, PPM images inside.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .emotions import EMOTIONS
from .vision import Image, LabeledExample, write_ppm


def _pattern_mask(cls: int, side: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side]
    period = int(rng.integers(side // 8, side // 4 + 1)) * 2
    phase = int(rng.integers(0, period))
    if cls == 0:    # horizontal stripes
        return ((yy + phase) // (period // 2)) % 2 == 0
    if cls == 1:    # vertical stripes
        return ((xx + phase) // (period // 2)) % 2 == 0
    if cls == 2:    # diagonal stripes
        return ((xx + yy + phase) // (period // 2)) % 2 == 0
    if cls == 3:    # filled disk
        cx = side / 2 + rng.uniform(-side / 8, side / 8)
        cy = side / 2 + rng.uniform(-side / 8, side / 8)
        radius = rng.uniform(side / 4.5, side / 3)
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
    if cls == 4:    # checkerboard
        cell = max(2, period // 2)
        return (((xx + phase) // cell) + ((yy + phase) // cell)) % 2 == 0
    if cls == 5:    # plus / cross
        cx = side // 2 + int(rng.integers(-side // 8, side // 8 + 1))
        cy = side // 2 + int(rng.integers(-side // 8, side // 8 + 1))
        bar = max(2, side // 8)
        return (np.abs(xx - cx) < bar) | (np.abs(yy - cy) < bar)
    return np.zeros((side, side), dtype=bool)  # class 6: flat field


def _render(cls: int, side: int, rng: np.random.Generator) -> Image:
    mask = _pattern_mask(cls, side, rng)
    fg = rng.integers(150, 256, size=3).astype(np.float64)
    bg = rng.integers(0, 90, size=3).astype(np.float64)
    px = np.where(mask[:, :, None], fg, bg)
    px += rng.normal(0.0, 12.0, size=px.shape)
    return Image(np.clip(px, 0, 255).astype(np.uint8))


def generate_examples(per_class: int = 20, side: int = 32,
                      seed: int = 0) -> list[LabeledExample]:
    """Deterministic class-major list of labeled images."""
    rng = np.random.default_rng(seed)
    out: list[LabeledExample] = []
    for label, cls_name in enumerate(EMOTIONS):
        for i in range(per_class):
            img = _render(label, side, rng)
            out.append(LabeledExample(img, label, f"{cls_name}/{i:03d}.ppm"))
    return out


def write_dataset(root, examples: list[LabeledExample]) -> None:
    root = Path(root)
    for ex in examples:
        path = root / ex.source_id
        path.parent.mkdir(parents=True, exist_ok=True)
        write_ppm(ex.image, path)


def generate_dataset(root, per_class: int = 20, side: int = 32, seed: int = 0) -> None:
    write_dataset(root, generate_examples(per_class, side, seed))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        description="Write a synthetic 7-class pattern dataset (PPM images).")
    ap.add_argument("outdir")
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    generate_dataset(args.outdir, args.per_class, args.side, args.seed)
    print(f"wrote {args.per_class * len(EMOTIONS)} images under {args.outdir}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
