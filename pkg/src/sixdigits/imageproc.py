"""Binarization and contour extraction for scanned digit crops.

Images are numpy arrays in row-major (height, width) layout: grayscale crops
are uint8 (0 = black ink, 255 = white paper), binary masks are bool with True
marking ink. Contour points use (x, y) pixel coordinates with y growing
downward.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "Contour",
    "ContourSet",
    "otsu_threshold",
    "binarize",
    "trace_contours",
    "read_gray",
    "write_pgm",
    "as_binary",
]

_EIGHT = np.ones((3, 3), dtype=bool)

# Moore neighborhood offsets (x, y) with y growing downward, scanned clockwise
# starting at the west neighbor. The same ring serves outer and inner walks:
# with the backtrack seeded in the exterior (outer) or in the hole (inner) the
# ink stays on the walk's right-hand side, which makes outer walks clockwise
# and inner walks counter-clockwise.
_CLOCKWISE = ((-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1))


@dataclass(frozen=True)
class Contour:
    """Closed boundary walk of one connected component.

    points is the ordered walk; consecutive points are 8-neighbors and the
    walk is cyclic (last point neighbors the first). kind is "outer" for the
    external boundary of an ink component and "inner" for the boundary facing
    an enclosed background hole. component_size is the pixel count of the ink
    component the walk belongs to, so downstream feature code can skip specks.
    """

    points: tuple[tuple[int, int], ...]
    kind: str
    component_size: int

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ContourSet:
    contours: tuple[Contour, ...]
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.contours)

    def __iter__(self):
        return iter(self.contours)


def otsu_threshold(img: np.ndarray) -> int:
    """Threshold maximizing between-class variance of the intensity histogram.

    The returned level t is meant for `binarize`, which marks intensities
    strictly below t as ink. On well-separated images every threshold inside
    the inter-class gap ties for the maximum; the midpoint of the tying range
    is returned so the level sits between the classes. A constant image
    returns its single intensity value, so binarizing it yields an
    all-background mask instead of crashing on a blank box.
    """
    img = np.asarray(img)
    if img.size == 0:
        raise ValueError("otsu_threshold: empty image")
    hist = np.bincount(img.reshape(-1).astype(np.uint8), minlength=256).astype(np.float64)
    nonzero = np.nonzero(hist)[0]
    if len(nonzero) == 1:
        return int(nonzero[0])
    total = hist.sum()
    # Class 0 holds intensities < t, class 1 the rest; sweep t = 0..255.
    cum = np.cumsum(hist)
    cum_mean = np.cumsum(hist * np.arange(256))
    w0 = np.concatenate(([0.0], cum[:-1]))  # w0[t] = #pixels < t
    m0 = np.concatenate(([0.0], cum_mean[:-1]))
    w1 = total - w0
    mean_total = cum_mean[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = np.where(w0 > 0, m0 / w0, 0.0)
        mu1 = np.where(w1 > 0, (mean_total - m0) / w1, 0.0)
    var_between = w0 * w1 * (mu0 - mu1) ** 2
    ties = np.nonzero(var_between == var_between.max())[0]
    return int((ties[0] + ties[-1]) // 2)


def binarize(img: np.ndarray, t: int) -> np.ndarray:
    """Mark intensities strictly below t as ink; dimensions are preserved."""
    return np.asarray(img) < t


def as_binary(img: np.ndarray) -> np.ndarray:
    """Pass binary masks through; Otsu-binarize grayscale input."""
    img = np.asarray(img)
    if img.dtype == bool:
        return img
    return binarize(img, otsu_threshold(img))


def trace_contours(img: np.ndarray) -> ContourSet:
    """Trace outer and inner boundaries of all ink components.

    One outer contour per 8-connected ink component and one inner contour per
    4-connected background hole, walked with Moore-neighbor tracing (Jacob's
    stopping criterion). Outer walks start at the component's top-most,
    left-most pixel and run clockwise; inner walks start at the ink pixel just
    above the hole's top-most, left-most pixel and run counter-clockwise.
    Contours are listed outer-first, each group in raster order of its start.
    """
    mask = np.asarray(img)
    if mask.dtype != bool:
        raise ValueError("trace_contours expects a boolean ink mask")
    h, w = mask.shape
    contours: list[Contour] = []

    labels, n_comp = ndimage.label(mask, structure=_EIGHT)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n_comp + 1))
    for comp in range(1, n_comp + 1):
        ys, xs = np.nonzero(labels == comp)
        start = (int(xs[0]), int(ys[0]))  # nonzero is raster-ordered
        walk = _moore_trace(mask, start, (start[0] - 1, start[1]), _CLOCKWISE)
        contours.append(Contour(tuple(walk), "outer", int(sizes[comp - 1])))

    if n_comp:
        bg_labels, n_bg = ndimage.label(~mask)  # 4-connectivity for background
        border = np.concatenate(
            [bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]]
        )
        border_ids = set(np.unique(border[border > 0]).tolist())
        for hole in range(1, n_bg + 1):
            if hole in border_ids:
                continue
            ys, xs = np.nonzero(bg_labels == hole)
            hx, hy = int(xs[0]), int(ys[0])
            # The pixel above a hole's raster-first pixel always belongs to the
            # enclosing component.
            comp = int(labels[hy - 1, hx])
            start = (hx, hy - 1)
            walk = _moore_trace(mask, start, (hx, hy), _CLOCKWISE)
            contours.append(Contour(tuple(walk), "inner", int(sizes[comp - 1])))

    return ContourSet(tuple(contours), width=w, height=h)


def _moore_trace(ink, start, backtrack, dirs):
    """Walk one closed boundary starting at `start` with backtrack cell `backtrack`.

    Iterates the (pixel, backtrack) state until a state repeats; the repeated
    segment is the closed walk, rotated to begin at `start`.
    """
    h, w = ink.shape
    state = (start, backtrack)
    seen = {state: 0}
    walk = [start]
    limit = 8 * int(ink.sum()) + 16
    for _ in range(limit):
        (px, py), (bx, by) = state
        idx = dirs.index((bx - px, by - py))
        nxt = None
        for k in range(1, 9):
            dx, dy = dirs[(idx + k) % 8]
            nx, ny = px + dx, py + dy
            if 0 <= nx < w and 0 <= ny < h and ink[ny, nx]:
                if k == 1:
                    nb = (bx, by)
                else:
                    pdx, pdy = dirs[(idx + k - 1) % 8]
                    nb = (px + pdx, py + pdy)
                nxt = ((nx, ny), nb)
                break
        if nxt is None:
            return [start]  # isolated single pixel
        if nxt in seen:
            cycle = walk[seen[nxt]:]
            if start in cycle:
                pos = cycle.index(start)
                cycle = cycle[pos:] + cycle[:pos]
            return cycle
        seen[nxt] = len(walk)
        walk.append(nxt[0])
        state = nxt
    raise RuntimeError("contour trace failed to close")  # pragma: no cover


def read_gray(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale image (PGM P5 or PNG) as a (h, w) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Write a grayscale or binary image as binary PGM (P5).

    Boolean masks are stored with ink as 0 (black) and background as 255, so a
    reload plus Otsu binarization reproduces the same ink set.
    """
    img = np.asarray(img)
    if img.dtype == bool:
        img = np.where(img, 0, 255).astype(np.uint8)
    else:
        img = img.astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())
