"""Deterministic PGM/PPM renderings of filters and filter properties."""

import colorsys
import math
import re

import numpy as np

BORDER = 1
_PNM_HEADER = re.compile(rb"(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s")


def write_pnm(path, img):
    """Write ``uint8`` ``(h, w)`` as binary PGM or ``(h, w, 3)`` as binary PPM."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def read_pnm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    # exactly one whitespace byte separates maxval from the raster
    m = _PNM_HEADER.match(data)
    if m is None:
        raise ValueError("not a binary PGM/PPM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ValueError("only 8-bit images are supported")
    ch = {b"P5": 1, b"P6": 3}[magic]
    body = data[m.end():]
    if len(body) < w * h * ch:
        raise ValueError("image raster is truncated")
    arr = np.frombuffer(body[:w * h * ch], dtype=np.uint8)
    return arr.reshape((h, w, 3) if ch == 3 else (h, w))


def _layout(n, layout):
    if layout is None:
        cols = int(math.ceil(math.sqrt(n)))
        return int(math.ceil(n / cols)), cols
    rows, cols = layout
    if rows * cols < n:
        raise ValueError(f"layout {rows}x{cols} cannot hold {n} tiles")
    return rows, cols


def _canvas(tiles, layout, channels):
    """Tile array ``(n, t, t[, 3])`` onto a grid with ``BORDER``-pixel gaps."""
    n, t = tiles.shape[0], tiles.shape[1]
    rows, cols = _layout(n, layout)
    shape = (rows * (t + BORDER) + BORDER, cols * (t + BORDER) + BORDER)
    canvas = np.zeros(shape + ((channels,) if channels == 3 else ()), dtype=np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        y0, x0 = BORDER + r * (t + BORDER), BORDER + c * (t + BORDER)
        canvas[y0:y0 + t, x0:x0 + t] = tiles[i]
    return canvas


def filter_tiles(W, patch_size=None):
    """Columns of ``W`` as 8-bit tiles, each scaled symmetrically about 0."""
    W = np.asarray(W, dtype=np.float64)
    p = patch_size or int(round(math.sqrt(W.shape[0])))
    if p * p != W.shape[0]:
        raise ValueError(f"filters of length {W.shape[0]} are not {p}x{p}")
    tiles = W.T.reshape(-1, p, p)
    scale = np.abs(tiles).reshape(len(tiles), -1).max(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    return np.round(127.5 + 127.5 * tiles / scale[:, None, None]).astype(np.uint8)


def render_mosaic(path, W, layout=None, patch_size=None):
    img = _canvas(filter_tiles(W, patch_size), layout, 1)
    write_pnm(path, img)
    return img


def render_topographic_map(path, W, grid_rows, grid_cols, patch_size=None):
    """Filters placed at their grid coordinates (filter ``r*cols + c``)."""
    if W.shape[1] != grid_rows * grid_cols:
        raise ValueError(f"{W.shape[1]} filters do not fill a {grid_rows}x{grid_cols} grid")
    return render_mosaic(path, W, (grid_rows, grid_cols), patch_size)


def _hsv_tile(hue, tile):
    rgb = colorsys.hsv_to_rgb(hue % 1.0, 1.0, 1.0)
    return np.broadcast_to(np.round(np.array(rgb) * 255).astype(np.uint8), (tile, tile, 3))


def render_property_map(path, spectra, prop, layout=None, tile=8):
    """One uni-coloured square per filter.

    Frequency is grey (black = 0, white = highest frequency present);
    orientation and phase map their angle to HSV hue. Degenerate filters
    stay black.
    """
    n = len(spectra)
    if prop == "frequency":
        top = max([s.frequency for s in spectra if not s.degenerate], default=0.0) or 1.0
        tiles = np.zeros((n, tile, tile), dtype=np.uint8)
        for i, s in enumerate(spectra):
            if not s.degenerate:
                tiles[i] = int(round(255 * s.frequency / top))
        img = _canvas(tiles, layout, 1)
    elif prop in ("orientation", "phase"):
        tiles = np.zeros((n, tile, tile, 3), dtype=np.uint8)
        for i, s in enumerate(spectra):
            if s.degenerate:
                continue
            hue = s.orientation / math.pi if prop == "orientation" else (s.phase + math.pi) / (2 * math.pi)
            tiles[i] = _hsv_tile(hue, tile)
        img = _canvas(tiles, layout, 3)
    else:
        raise ValueError(f"unknown property {prop!r}")
    write_pnm(path, img)
    return img


def render_phase_scatter(path, table, width=256, row_height=6):
    """One row per frequency/orientation bin, a dot per phase difference."""
    keys = sorted(table.rows)
    img = np.zeros((max(len(keys), 1) * row_height, width, 3), dtype=np.uint8)
    for r, key in enumerate(keys):
        hue = (r * 0.61803398875) % 1.0
        color = np.round(np.array(colorsys.hsv_to_rgb(hue, 1.0, 1.0)) * 255).astype(np.uint8)
        for delta in table.rows[key]:
            x = min(int((delta + math.pi) / (2 * math.pi) * width), width - 1)
            img[r * row_height + 1:(r + 1) * row_height - 1, max(x - 1, 0):x + 2] = color
    write_pnm(path, img)
    return img
