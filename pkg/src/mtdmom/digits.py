"""Surrogate handwritten-digit dataset rendered from font glyphs.

Used when the official digit archives are unavailable: each sample is a
digit glyph with randomized scale and offset, anti-aliased into the target
frame, roughly matching the layout of the classic 28x28 digit sets (content
about 20 pixels tall, centered).  Class-major ordering, so taking every
(count/10)-th image yields one holdout per class.
"""

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont


def _glyph(digit):
    font = ImageFont.load_default()
    canvas = Image.new("L", (32, 32), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((8, 8), str(digit), fill=255, font=font)
    arr = np.asarray(canvas)
    rows = np.flatnonzero(arr.max(axis=1))
    cols = np.flatnonzero(arr.max(axis=0))
    return arr[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]


def render_digit(digit, side, rng=None, jitter=True):
    glyph = _glyph(digit)
    base = int(round(side * 20 / 28))
    if rng is not None and jitter:
        scale = rng.uniform(0.85, 1.15)
        dx, dy = rng.integers(-2, 3, size=2)
    else:
        scale, dx, dy = 1.0, 0, 0
    h = max(4, int(round(base * scale)))
    w = max(3, int(round(h * glyph.shape[1] / glyph.shape[0])))
    patch = Image.fromarray(glyph).resize((w, h), Image.BILINEAR)
    canvas = Image.new("L", (side, side), 0)
    ox = (side - w) // 2 + int(dx)
    oy = (side - h) // 2 + int(dy)
    canvas.paste(patch, (max(0, ox), max(0, oy)))
    canvas = canvas.filter(ImageFilter.GaussianBlur(radius=0.4))
    arr = np.asarray(canvas).astype(np.float64)
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def build_digit_dataset(per_class, side, seed):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for digit in range(10):
        for _ in range(per_class):
            images.append(render_digit(digit, side, rng))
            labels.append(digit)
    return images, labels
