"""File formats: binary field dumps, 16-bit PGM, false-colour PNG, JSON sidecars.

Binary field dump: one JSON header line terminated by a newline, followed by
row-major little-endian float64 pairs (re, im).  The header records nx, ny,
extent, time and the length and time units in SI.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .config import Grid2D
from .errors import ParameterError
from .expansion import WaveField2D
from .imaging import DensityImage

FIELD_FORMAT = "ringsquid-field-v1"
PNG_CMAP = "jet"


def write_field(field: WaveField2D, path, length_unit_m: float = 1.0, time_unit_s: float = 1.0,
                extra: dict | None = None):
    g = field.grid
    header = {"format": FIELD_FORMAT, "nx": g.nx, "ny": g.ny, "extent": g.extent,
              "time": field.time, "units": {"length_m": length_unit_m, "time_s": time_unit_s}}
    if extra:
        header["extra"] = extra
    data = np.empty((g.ny, g.nx, 2), dtype="<f8")
    data[..., 0] = field.amplitude.real
    data[..., 1] = field.amplitude.imag
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(data.tobytes(order="C"))


def read_field(path):
    """Returns (WaveField2D, header dict)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: bad field header") from exc
        if header.get("format") != FIELD_FORMAT:
            raise ParameterError(f"{path}: not a {FIELD_FORMAT} file")
        nx, ny = int(header["nx"]), int(header["ny"])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * nx * ny:
        raise ParameterError(f"{path}: expected {2 * nx * ny} values, found {raw.size}")
    raw = raw.reshape(ny, nx, 2)
    grid = Grid2D(nx, ny, float(header["extent"]))
    amp = raw[..., 0] + 1j * raw[..., 1]
    return WaveField2D(grid, amp, float(header["time"])), header


def write_pgm16(values, path):
    """Scale to the full 16-bit range; returns the scale (value per count)."""
    v = np.asarray(values, dtype=float)
    vmax = float(np.max(v)) if v.size else 0.0
    scale = vmax / 65535.0 if vmax > 0 else 1.0
    counts = np.clip(np.rint(v / scale), 0, 65535).astype(">u2")
    ny, nx = counts.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode())
        # PGM rows run top to bottom; our arrays have y increasing with row.
        fh.write(counts[::-1].tobytes())
    return scale


def _pgm_tokens(fh, count):
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise ParameterError("truncated PGM header")
        line = line.split(b"#", 1)[0]
        tokens += line.split()
    return tokens


def read_pgm16(path, scale: float = 1.0):
    """Binary PGM (8 or 16 bit) to a float array with y increasing by row."""
    with open(path, "rb") as fh:
        magic, nx, ny, maxval = _pgm_tokens(fh, 4)
        if magic != b"P5":
            raise ParameterError(f"{path}: only binary (P5) PGM is supported")
        nx, ny, maxval = int(nx), int(ny), int(maxval)
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(fh.read(), dtype=dtype)
    if data.size != nx * ny:
        raise ParameterError(f"{path}: expected {nx * ny} pixels, found {data.size}")
    return data.reshape(ny, nx)[::-1].astype(float) * scale


def write_png(values, path, cmap: str = PNG_CMAP, gamma: float = 1.0):
    """8-bit false-colour render normalised to the image maximum."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    v = np.asarray(values, dtype=float)
    vmax = float(np.max(v)) or 1.0
    plt.imsave(path, np.clip(v / vmax, 0, 1) ** gamma, cmap=cmap, vmin=0.0, vmax=1.0,
               origin="lower")


def sidecar_path(path):
    return Path(str(path) + ".json")


def write_sidecar(path, meta: dict):
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    return str(obj)


def image_meta(img: DensityImage, params_hash: str | None = None, **extra):
    meta = {"kind": img.kind, "time": img.time, "time_s": img.time_s,
            "psf_radius": img.psf_radius, "length_unit_m": img.length_unit_m,
            "time_unit_s": img.time_unit_s,
            "grid": img.grid.to_dict(), "params_hash": params_hash, "png_cmap": PNG_CMAP}
    meta.update(img.meta)
    meta.update(extra)
    return meta


def save_image(img: DensityImage, stem, params_hash: str | None = None, **extra):
    """PGM + PNG + sidecars for one image; returns the written paths."""
    stem = Path(stem)
    pgm = stem.with_suffix(".pgm")
    png = stem.with_suffix(".png")
    scale = write_pgm16(img.values, pgm)
    write_png(img.values, png)
    meta = image_meta(img, params_hash, pgm_scale=scale, **extra)
    write_sidecar(pgm, meta)
    write_sidecar(png, meta)
    return [pgm, sidecar_path(pgm), png, sidecar_path(png)]


def load_image(path, length_unit_m: float = 1.0) -> DensityImage:
    """Read an image written by ``save_image`` (PGM plus sidecar), or a bare
    PGM whose grid is taken as unit pitch centred on the origin."""
    path = Path(path)
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        values = read_pgm16(path, meta.get("pgm_scale", 1.0))
        gd = meta["grid"]
        grid = Grid2D(int(gd["nx"]), int(gd["ny"]), float(gd["extent"]))
        return DensityImage(grid, values, kind=meta.get("kind", "density"),
                            time=float(meta.get("time", 0.0)), psf_radius=meta.get("psf_radius"),
                            length_unit_m=float(meta.get("length_unit_m", length_unit_m)),
                            time_unit_s=float(meta.get("time_unit_s", 1.0)))
    values = read_pgm16(path)
    ny, nx = values.shape
    return DensityImage(Grid2D(nx, ny, float(nx)), values, length_unit_m=length_unit_m)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
