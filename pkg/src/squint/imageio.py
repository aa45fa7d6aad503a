"""Image file I/O: 8-bit PNG plus binary PPM (P6) and PGM (P5).

The PNM formats are written by hand so golden files stay inspectable as
plain bytes; PNG goes through Pillow.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import ChannelMismatch, ImageBuffer


class UnsupportedImage(ValueError):
    """File is not an 8-bit raster this library handles."""


def encode_png(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(img.pixels, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    with Image.open(io.BytesIO(data)) as pil:
        if pil.mode == "L":
            return ImageBuffer(np.asarray(pil, dtype=np.uint8))
        if pil.mode in ("I", "I;16", "F"):
            raise UnsupportedImage(f"only 8-bit images are supported, got mode {pil.mode}")
        return ImageBuffer(np.asarray(pil.convert("RGB"), dtype=np.uint8))


def encode_pnm(img: ImageBuffer) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + img.tobytes()


def _read_pnm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise UnsupportedImage("truncated PNM header")
    return data[start:pos], pos


def decode_pnm(data: bytes) -> ImageBuffer:
    magic, pos = _read_pnm_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise UnsupportedImage(f"not a binary PGM/PPM file (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_pnm_token(data, pos)
        if not tok.isdigit():
            raise UnsupportedImage(f"bad PNM header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedImage(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise UnsupportedImage(f"expected {need} sample bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return ImageBuffer(arr.reshape(shape).copy())


def read_image(path: str | Path) -> ImageBuffer:
    """Load a PNG/PPM/PGM file, dispatching on the file magic."""
    data = Path(path).read_bytes()
    if data[:2] in (b"P5", b"P6"):
        return decode_pnm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return decode_png(data)
    raise UnsupportedImage(f"{path}: unrecognized image format")


def write_image(path: str | Path, img: ImageBuffer) -> None:
    """Save by extension: .png, .pgm (1 channel), or .ppm (3 channels)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        path.write_bytes(encode_png(img))
    elif suffix == ".pgm":
        if img.channels != 1:
            raise ChannelMismatch("PGM holds exactly 1 channel")
        path.write_bytes(encode_pnm(img))
    elif suffix == ".ppm":
        if img.channels != 3:
            raise ChannelMismatch("PPM holds exactly 3 channels")
        path.write_bytes(encode_pnm(img))
    else:
        raise UnsupportedImage(f"unsupported output extension {suffix!r}")
