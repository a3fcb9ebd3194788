"""Image I/O, bicubic resampling, degradation and training-patch sampling.

Images are ``uint8`` arrays of shape ``(height, width, 3)``. Tensors are the
float32 ``(n, c, h, w)`` arrays of :mod:`spbp.tensor`, with values in [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .tensor import ShapeError, as_tensor

CUBIC_A = -0.5


# -- PNG --------------------------------------------------------------------

def load_png(path) -> np.ndarray:
    """Read an 8-bit PNG as an RGB ``uint8`` array; any alpha channel is dropped."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F", "1"):
                raise ValueError(f"{path}: unsupported PNG pixel format {im.mode!r}; need 8-bit RGB/RGBA")
            if im.mode != "RGB":
                im = im.convert("RGB")
            return np.array(im, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"{path}: cannot decode PNG ({exc})") from exc


def save_png(img: np.ndarray, path) -> None:
    img = check_image(img)
    PILImage.fromarray(img, mode="RGB").save(Path(path), format="PNG")


def check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3 or min(img.shape[:2]) < 1:
        raise ShapeError(f"expected uint8 image of shape (h, w, 3), got {img.dtype} {img.shape}")
    return img


# -- tensor conversion ------------------------------------------------------

def to_tensor(img) -> np.ndarray:
    img = check_image(img)
    return (img.astype(np.float64) / 255.0).astype(np.float32).transpose(2, 0, 1)[None].copy()


def from_tensor(t) -> np.ndarray:
    """Inverse of :func:`to_tensor` for a batch of one; rounds half away from zero."""
    t = as_tensor(t)
    if t.shape[0] != 1 or t.shape[1] != 3:
        raise ShapeError(f"from_tensor: expected shape (1, 3, h, w), got {t.shape}")
    v = np.clip(t[0].astype(np.float64) * 255.0, 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8).transpose(1, 2, 0).copy()


# -- bicubic ----------------------------------------------------------------

def cubic(x: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5 (support [-2, 2])."""
    a = CUBIC_A
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _as_fraction(scale) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    if isinstance(scale, int):
        return Fraction(scale)
    return Fraction(scale).limit_denominator(1 << 20)


def output_size(size: int, scale) -> int:
    """``round(size * scale)`` with halves rounded up."""
    return math.floor(size * _as_fraction(scale) + Fraction(1, 2))


@lru_cache(maxsize=64)
def resize_matrix(in_size: int, out_size: int, scale: Fraction, antialias: bool) -> np.ndarray:
    """Dense ``(out_size, in_size)`` interpolation matrix for one axis.

    Half-pixel-centered mapping; when shrinking with ``antialias`` the kernel is
    stretched by ``1/scale``. Sample positions outside the input clamp to the edge.
    Each row sums to 1.
    """
    s = float(scale)
    stretch = antialias and s < 1
    width = 4.0 / s if stretch else 4.0
    x = np.arange(out_size, dtype=np.float64)
    u = (x + 0.5) / s - 0.5
    left = np.floor(u - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = s * cubic(s * dist) if stretch else cubic(dist)
    w /= w.sum(axis=1, keepdims=True)
    cols = np.clip(idx, 0, in_size - 1).astype(np.int64)
    mat = np.zeros((out_size, in_size), dtype=np.float64)
    np.add.at(mat, (np.repeat(np.arange(out_size), taps), cols.ravel()), w.ravel())
    mat.setflags(write=False)
    return mat


def bicubic_resize(x, scale, antialias: bool = True) -> np.ndarray:
    """Separable bicubic resampling of an ``(n, c, h, w)`` tensor by ``scale``."""
    x = as_tensor(x)
    scale = _as_fraction(scale)
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    n, c, h, w = x.shape
    oh, ow = output_size(h, scale), output_size(w, scale)
    if oh < 1 or ow < 1:
        raise ShapeError(f"bicubic_resize: {h}x{w} at scale {scale} gives an empty output")
    rows = resize_matrix(h, oh, scale, antialias)
    cols = resize_matrix(w, ow, scale, antialias)
    out = np.einsum("ph,nchw,qw->ncpq", rows, x.astype(np.float64), cols, optimize=True)
    return out.astype(np.float32)


def crop_to_multiple(img: np.ndarray, s: int) -> np.ndarray:
    h, w = img.shape[:2]
    return img[: h - h % s, : w - w % s]


def make_lr(hr, s: int, antialias: bool = True) -> np.ndarray:
    """Bicubic-degrade an HR image by ``1/s`` (HR is first cropped to a multiple of ``s``)."""
    hr = check_image(hr)
    if min(hr.shape[:2]) < s:
        raise ShapeError(f"make_lr: image {hr.shape[1]}x{hr.shape[0]} smaller than scale {s}")
    hr = crop_to_multiple(hr, s)
    return from_tensor(bicubic_resize(to_tensor(hr), Fraction(1, s), antialias=antialias))


# -- patches ----------------------------------------------------------------

def sample_patch(lr: np.ndarray, hr: np.ndarray, crop: int, rng: np.random.Generator):
    """Uniformly placed ``crop`` x ``crop`` LR window and its aligned HR window.

    Arrays are ``(h, w, ...)``; the scale is inferred from the HR/LR size ratio.
    """
    lh, lw = lr.shape[:2]
    if crop < 1 or crop > lh or crop > lw:
        raise ShapeError(f"crop {crop} does not fit LR image {lw}x{lh}")
    s = hr.shape[0] // lh
    if s < 1 or hr.shape[0] < s * lh or hr.shape[1] < s * lw:
        raise ShapeError(f"HR {hr.shape[:2]} is not an integer multiple of LR {lr.shape[:2]}")
    y = int(rng.integers(0, lh - crop + 1))
    x = int(rng.integers(0, lw - crop + 1))
    return (
        lr[y:y + crop, x:x + crop],
        hr[s * y:s * (y + crop), s * x:s * (x + crop)],
    )


def apply_transform(img: np.ndarray, hflip: bool, vflip: bool, rot90: bool) -> np.ndarray:
    if hflip:
        img = img[:, ::-1]
    if vflip:
        img = img[::-1]
    if rot90:
        img = np.rot90(img, 1, axes=(0, 1))
    return np.ascontiguousarray(img)


def augment(lr: np.ndarray, hr: np.ndarray, rng: np.random.Generator):
    """Apply one random flip/rotate draw identically to both patches."""
    hflip, vflip, rot = (bool(v < 0.5) for v in rng.random(3))
    return apply_transform(lr, hflip, vflip, rot), apply_transform(hr, hflip, vflip, rot)


# -- manifests --------------------------------------------------------------

@dataclass
class DatasetManifest:
    """HR image paths with degradation settings.

    On disk: a text file with one HR path per line (optionally followed by a tab
    and a precomputed LR path) and a JSON sidecar ``<stem>.json`` holding
    ``{"scale": int, "antialias": bool}``. Relative paths resolve against the
    manifest's directory.
    """

    hr_paths: list[Path]
    scale: int = 2
    antialias: bool = True
    lr_paths: list[Path | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.lr_paths:
            self.lr_paths = [None] * len(self.hr_paths)
        if len(self.lr_paths) != len(self.hr_paths):
            raise ValueError("lr_paths must align with hr_paths")

    def __len__(self):
        return len(self.hr_paths)

    def load_pairs(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """``(name, lr, hr)`` triples; HR cropped to a multiple of the scale."""
        pairs = []
        for hr_path, lr_path in zip(self.hr_paths, self.lr_paths):
            hr = crop_to_multiple(load_png(hr_path), self.scale)
            if lr_path is None:
                lr = make_lr(hr, self.scale, self.antialias)
            else:
                lr = load_png(lr_path)
                expect = (-(-hr.shape[0] // self.scale), -(-hr.shape[1] // self.scale))
                if lr.shape[:2] != expect:
                    raise ShapeError(f"{lr_path}: LR size {lr.shape[:2]} != expected {expect}")
            pairs.append((Path(hr_path).stem, lr, hr))
        return pairs


def sidecar_path(manifest_path) -> Path:
    return Path(manifest_path).with_suffix(".json")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such manifest: {path}")
    settings = {"scale": 2, "antialias": True}
    side = sidecar_path(path)
    if side.is_file() and side != path:
        settings.update(json.loads(side.read_text()))
    hr_paths, lr_paths = [], []
    for line in path.read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        hr, _, lr = line.partition("\t")
        hr_paths.append(path.parent / hr.strip())
        lr_paths.append(path.parent / lr.strip() if lr.strip() else None)
    if not hr_paths:
        raise ValueError(f"manifest {path} lists no images")
    for p in hr_paths + [p for p in lr_paths if p is not None]:
        if not p.is_file():
            raise FileNotFoundError(f"manifest {path} references missing file {p}")
    return DatasetManifest(hr_paths, int(settings["scale"]), bool(settings["antialias"]), lr_paths)


def write_manifest(path, hr_paths, scale: int = 2, antialias: bool = True) -> Path:
    path = Path(path)
    lines = [str(Path(p)) for p in hr_paths]
    path.write_text("\n".join(lines) + "\n")
    sidecar_path(path).write_text(json.dumps({"scale": scale, "antialias": antialias}) + "\n")
    return path
