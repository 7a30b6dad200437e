"""Minimal scatter-plot rasterizer writing binary PPM images.

Good enough to eyeball 2-d point clouds without pulling in a plotting
stack: white background, one fixed palette color per class, filled
square markers. Output is deterministic for identical inputs.
"""

import numpy as np

PALETTE = (
    (228, 26, 28),
    (55, 126, 184),
    (77, 175, 74),
    (152, 78, 163),
    (255, 127, 0),
    (166, 86, 40),
    (247, 129, 191),
)


def write_ppm(path, image):
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be (H, W, 3) uint8, got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def _auto_bounds(points):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    return (lo[0] - 0.05 * span[0], hi[0] + 0.05 * span[0],
            lo[1] - 0.05 * span[1], hi[1] + 0.05 * span[1])


def scatter_image(points, labels, size=360, bounds=None, marker=1):
    """Rasterize labeled 2-d points onto a white canvas."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"scatter needs (n, 2) points, got {pts.shape}")
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (pts.shape[0],):
        raise ValueError("labels must align with points")
    img = np.full((size, size, 3), 255, dtype=np.uint8)
    if bounds is None:
        bounds = _auto_bounds(pts)
    x0, x1, y0, y1 = bounds
    px = ((pts[:, 0] - x0) / (x1 - x0) * (size - 1)).round().astype(int)
    py = ((y1 - pts[:, 1]) / (y1 - y0) * (size - 1)).round().astype(int)
    inside = (px >= 0) & (px < size) & (py >= 0) & (py < size)
    for x, y, c in zip(px[inside], py[inside], lab[inside]):
        color = PALETTE[c % len(PALETTE)]
        lo_y, hi_y = max(0, y - marker), min(size, y + marker + 1)
        lo_x, hi_x = max(0, x - marker), min(size, x + marker + 1)
        img[lo_y:hi_y, lo_x:hi_x] = color
    return img


def scatter_ppm(path, points, labels, size=360, bounds=None, marker=1):
    write_ppm(path, scatter_image(points, labels, size=size, bounds=bounds, marker=marker))
