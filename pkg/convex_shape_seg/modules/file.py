"""
Purpose:
    Readers and writers for everything a segmentation run touches on disk:
    8-bit images and label masks, the output mask and overlay, the CSV
    iteration log and the run report (JSON or YAML).

    Output masks follow the indicator convention: object = 0, background = 255.
"""

import csv
import json
import os
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import yaml
from PIL import Image, UnidentifiedImageError

from convex_shape_seg.modules.grid import BinaryField, PixelSet, perimeter_mask
from convex_shape_seg.types import IterationRecord, RunReport, radius_key

OVERLAY_COLOR = (255, 0, 0)


class ImageLoadError(ValueError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"cannot read image '{path}': {reason}")


def _ensure_parent(fname: str):
    parent = os.path.dirname(fname)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)


def _open(path: str) -> Image.Image:
    try:
        img = Image.open(path)
        # force the decode now so truncated files fail here
        img.load()
    except FileNotFoundError:
        raise ImageLoadError(path, "file not found")
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageLoadError(path, str(e) or type(e).__name__)
    return img


# ------------------ images and masks ------------------


def load_image(path: str) -> np.ndarray:
    """
    8-bit image as float64 of shape (H, W, 1) for grayscale or (H, W, 3) for color.
    """
    img = _open(path)
    if img.mode in ("I", "I;16", "I;16B", "F"):
        raise ImageLoadError(path, f"unsupported pixel mode '{img.mode}', expected 8-bit")
    if img.mode in ("L", "LA", "1"):
        return np.asarray(img.convert("L"), dtype=np.float64)[:, :, None]
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    if img.mode in ("P", "PA") and _is_gray(rgb):
        # grayscale saved with a gray palette
        return np.ascontiguousarray(rgb[:, :, :1])
    return rgb


def _is_gray(rgb: np.ndarray) -> bool:
    return np.array_equal(rgb[:, :, 0], rgb[:, :, 1]) and np.array_equal(rgb[:, :, 1], rgb[:, :, 2])


def _load_mask_array(path: str) -> np.ndarray:
    return np.asarray(_open(path).convert("L"))


def load_labels(
    fg_path: str, bg_path: Optional[str], image_dims: Tuple[int, int]
) -> Tuple[PixelSet, PixelSet]:
    """
    Nonzero pixels of the foreground / background masks. image_dims is (width, height).
    """
    width, height = image_dims
    masks = []
    for name, path in (("foreground", fg_path), ("background", bg_path)):
        if path is None:
            masks.append(np.zeros((height, width), dtype=bool))
            continue
        mask = _load_mask_array(path)
        if mask.shape != (height, width):
            raise ValueError(
                f"{name} mask '{path}' is {mask.shape[1]}x{mask.shape[0]}, image is {width}x{height}"
            )
        masks.append(mask > 0)

    R_ob, R_bg = PixelSet.from_mask(masks[0]), PixelSet.from_mask(masks[1])
    if len(R_ob) == 0:
        raise ValueError(f"no object labels in '{fg_path}'")
    return R_ob, R_bg


def write_mask(fname: str, u: BinaryField):
    """
    object = 0, background = 255. The format follows the file extension.
    """
    _ensure_parent(fname)
    Image.fromarray((u.values * 255).astype(np.uint8)).save(fname)


def write_grayscale(fname: str, values: np.ndarray):
    """
    Raw 8-bit single channel raster (phantom images and label masks).
    """
    _ensure_parent(fname)
    Image.fromarray(np.asarray(values, dtype=np.uint8)).save(fname)


def read_mask(fname: str) -> BinaryField:
    values = _load_mask_array(fname)
    return BinaryField((values > 127).astype(np.uint8))


def write_overlay(fname: str, image: np.ndarray, u: BinaryField):
    """
    Input image as RGB with the object perimeter painted red.
    """
    rgb = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    if rgb.ndim == 2:
        rgb = rgb[:, :, None]
    if rgb.shape[2] == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    rgb = rgb.copy()
    rgb[perimeter_mask(u)] = OVERLAY_COLOR
    _ensure_parent(fname)
    Image.fromarray(rgb).save(fname)


# ------------------ iteration log ------------------


def csv_header(radii: Sequence[float]) -> list:
    return ["t", "rv"] + [f"min_violation_{radius_key(r)}" for r in radii] + ["band_size"]


def write_iteration_log(fname: str, radii: Sequence[float], records: Iterable[IterationRecord]):
    _ensure_parent(fname)
    with open(fname, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(csv_header(radii))
        for record in records:
            rv = "" if record.rv is None else f"{record.rv:.8g}"
            violations = [f"{record.min_violation[r]:.8g}" for r in radii]
            writer.writerow([record.t, rv] + violations + [record.band_size])


# ------------------ reports ------------------


def write_json_file(fname, data: dict):
    _ensure_parent(fname)
    with open(fname, "w") as f:
        json.dump(data, f, indent=4)


def write_yml_file(fname, data: dict):
    _ensure_parent(fname)
    with open(fname, "w") as f:
        yaml.safe_dump(data, f, sort_keys=False)


def write_report(fname: str, report: RunReport):
    """
    JSON, or YAML when the name ends in .yml / .yaml.
    """
    data = report.to_dict()
    if fname.lower().endswith((".yml", ".yaml")):
        write_yml_file(fname, data)
    else:
        write_json_file(fname, data)


def read_report(fname: str) -> dict:
    with open(fname, "r") as f:
        if fname.lower().endswith((".yml", ".yaml")):
            return yaml.safe_load(f)
        return json.load(f)
