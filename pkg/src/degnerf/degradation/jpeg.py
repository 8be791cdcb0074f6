"""Baseline JPEG round trip in memory.

Full-resolution chroma (no subsampling) and no entropy coding, since the
lossless stages do not change pixels.  Blocks are padded by edge replication.
"""

from __future__ import annotations

import numpy as np

from ..scene_io import ValidationError, check_image

LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

CHROMA_TABLE = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)

# JFIF full-range RGB -> YCbCr (on the 0..255 scale, chroma offset 128)
RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)
CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are frequencies."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


DCT8 = dct_matrix(8)


def quality_scale(quality: int) -> int:
    if not 1 <= quality <= 100:
        raise ValidationError(f"JPEG quality must be in [1, 100], got {quality}")
    return 5000 // quality if quality < 50 else 200 - 2 * quality


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    scale = quality_scale(int(quality))
    return np.clip(np.floor((base * scale + 50) / 100), 1, 255)


def blocks(plane: np.ndarray) -> np.ndarray:
    """(H, W) with H, W multiples of 8 -> (H/8, W/8, 8, 8)."""
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def unblocks(b: np.ndarray) -> np.ndarray:
    nh, nw = b.shape[:2]
    return b.swapaxes(1, 2).reshape(nh * 8, nw * 8)


def code_plane(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Level-shifted plane -> DCT -> quantize -> dequantize -> IDCT."""
    b = blocks(plane)
    coef = DCT8 @ b @ DCT8.T
    coef = np.round(coef / table) * table
    return unblocks(DCT8.T @ coef @ DCT8)


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    img = check_image(img)
    lq = quant_table(LUMA_TABLE, quality)
    cq = quant_table(CHROMA_TABLE, quality)
    h, w = img.shape[:2]
    ph, pw = -h % 8, -w % 8
    rgb = np.pad(img * 255.0, ((0, ph), (0, pw), (0, 0)), mode="edge")
    ycc = rgb @ RGB_TO_YCBCR.T + CHROMA_OFFSET - 128.0
    out = np.empty_like(ycc)
    for c, table in enumerate((lq, cq, cq)):
        out[..., c] = code_plane(ycc[..., c], table)
    rgb = (out + 128.0 - CHROMA_OFFSET) @ YCBCR_TO_RGB.T
    return np.clip(rgb[:h, :w] / 255.0, 0.0, 1.0)
