"""Text file formats: pair vectors, mask files, line-delimited report records.

Vector files are human-diffable: a small key=value header, then one record
per line holding the subset bitmask in hex, the alternative index, and the
value in either full-precision decimal (repr, shortest round-trip) or C99
hex-float. Both serializations reproduce the float64 bit pattern exactly.

A vector file must contain every pair of every observed subset exactly
once; pairs of unobserved subsets may be omitted (they are never read).
Report files hold one record per line as space-separated key=value tokens.
"""

from __future__ import annotations

import io
from typing import Iterable, TextIO

import numpy as np

from .lattice import LatticeIndexer, build_indexer

FORMAT_VERSION = 1


class VectorFileError(ValueError):
    """Malformed vector/mask file; message carries the line number."""


def _fmt_value(x: float, hex_floats: bool) -> str:
    return float(x).hex() if hex_floats else repr(float(x))


def _parse_value(tok: str, line_no: int) -> float:
    try:
        v = float.fromhex(tok) if ("0x" in tok or "0X" in tok) else float(tok)
    except ValueError:
        raise VectorFileError(f"line {line_no}: cannot parse value {tok!r}") from None
    if not np.isfinite(v):
        raise VectorFileError(f"line {line_no}: non-finite value {tok!r}")
    return v


def write_vector(
    dest: str | TextIO,
    indexer: LatticeIndexer,
    values: np.ndarray,
    observed_sets: Iterable[int] | None = None,
    hex_floats: bool = False,
) -> None:
    """Serialize a pair vector; restricted to observed subsets when given."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (indexer.num_pairs,):
        raise VectorFileError(
            f"vector length {values.shape} does not match n={indexer.n}"
        )
    close = False
    if isinstance(dest, str):
        fh: TextIO = open(dest, "w")
        close = True
    else:
        fh = dest
    try:
        fh.write(f"# rumflow vector v{FORMAT_VERSION}\n")
        fh.write(f"n={indexer.n}\n")
        fh.write(f"format={'hex' if hex_floats else 'decimal'}\n")
        if observed_sets is None:
            fh.write("mask=full\n")
            sets = range(1, indexer.num_vertices)
        else:
            sets = sorted(int(s) for s in observed_sets)
            fh.write("mask=" + ",".join(f"0x{s:x}" for s in sets) + "\n")
        for s in sets:
            off = int(indexer.offsets[s])
            alts = [a for a in range(indexer.n) if (s >> a) & 1]
            for k, a in enumerate(alts):
                fh.write(f"0x{s:x} {a} {_fmt_value(values[off + k], hex_floats)}\n")
    finally:
        if close:
            fh.close()


def read_vector(src: str | TextIO) -> tuple[LatticeIndexer, np.ndarray, frozenset[int] | None]:
    """Parse a vector file; returns (indexer, values, observed sets or None)."""
    close = False
    if isinstance(src, str):
        fh: TextIO = open(src, "r")
        close = True
    else:
        fh = src
    try:
        header: dict[str, str] = {}
        records: list[tuple[int, str, str, str]] = []
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and " " not in line:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
                continue
            parts = line.split()
            if len(parts) != 3:
                raise VectorFileError(
                    f"line {line_no}: expected 'subset alt value', got {line!r}"
                )
            records.append((line_no, *parts))
    finally:
        if close:
            fh.close()

    if "n" not in header:
        raise VectorFileError("missing 'n=' header")
    try:
        n = int(header["n"])
    except ValueError:
        raise VectorFileError(f"invalid n={header['n']!r}") from None
    indexer = build_indexer(n)

    mask_field = header.get("mask", "full")
    observed: frozenset[int] | None
    if mask_field == "full":
        observed = None
    else:
        try:
            observed = frozenset(int(tok, 16) for tok in mask_field.split(","))
        except ValueError:
            raise VectorFileError(f"invalid mask header {mask_field!r}") from None

    values = np.zeros(indexer.num_pairs)
    seen = np.zeros(indexer.num_pairs, dtype=bool)
    for line_no, subset_tok, alt_tok, val_tok in records:
        try:
            subset = int(subset_tok, 16)
            alt = int(alt_tok)
        except ValueError:
            raise VectorFileError(
                f"line {line_no}: bad subset/alternative {subset_tok!r} {alt_tok!r}"
            ) from None
        if not 0 < subset < indexer.num_vertices:
            raise VectorFileError(f"line {line_no}: subset 0x{subset:x} out of range")
        if not 0 <= alt < n or not (subset >> alt) & 1:
            raise VectorFileError(
                f"line {line_no}: alternative {alt} not in subset 0x{subset:x}"
            )
        idx = indexer.pair_to_dense(subset, alt)
        if seen[idx]:
            raise VectorFileError(
                f"line {line_no}: duplicate pair (0x{subset:x}, {alt})"
            )
        seen[idx] = True
        values[idx] = _parse_value(val_tok, line_no)

    required = np.zeros(indexer.num_pairs, dtype=bool)
    sets = range(1, indexer.num_vertices) if observed is None else sorted(observed)
    for s in sets:
        off = int(indexer.offsets[s])
        required[off : off + int(indexer.subset_sizes[s])] = True
    missing = required & ~seen
    if np.any(missing):
        first = int(np.nonzero(missing)[0][0])
        D, x = indexer.dense_to_pair(first)
        raise VectorFileError(f"missing pair (0x{D:x}, {x}) for an observed subset")

    return indexer, values, observed


def read_mask(src: str | TextIO, indexer: LatticeIndexer) -> frozenset[int]:
    """Mask file: one subset bitmask (hex) per line, '#' comments allowed."""
    close = False
    if isinstance(src, str):
        fh: TextIO = open(src, "r")
        close = True
    else:
        fh = src
    sets: set[int] = set()
    try:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                s = int(line, 16)
            except ValueError:
                raise VectorFileError(
                    f"line {line_no}: bad subset bitmask {line!r}"
                ) from None
            if not 0 < s < indexer.num_vertices:
                raise VectorFileError(
                    f"line {line_no}: subset 0x{s:x} out of range for n={indexer.n}"
                )
            sets.add(s)
    finally:
        if close:
            fh.close()
    return frozenset(sets)


# ---------------------------------------------------------------------------
# line-delimited report records
# ---------------------------------------------------------------------------


def format_record(kind: str, fields: dict) -> str:
    toks = [f"record={kind}"]
    for key, val in fields.items():
        if isinstance(val, float):
            toks.append(f"{key}={val!r}")
        elif isinstance(val, (list, tuple, np.ndarray)):
            toks.append(f"{key}=" + ",".join(repr(float(x)) for x in val))
        elif isinstance(val, bool):
            toks.append(f"{key}={int(val)}")
        else:
            toks.append(f"{key}={val}")
    return " ".join(toks)


def parse_records(src: str | TextIO) -> list[dict[str, str]]:
    close = False
    if isinstance(src, str):
        fh: TextIO = open(src, "r")
        close = True
    else:
        fh = src
    out = []
    try:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rec: dict[str, str] = {}
            for tok in line.split():
                key, _, val = tok.partition("=")
                rec[key] = val
            out.append(rec)
    finally:
        if close:
            fh.close()
    return out


# ---------------------------------------------------------------------------
# minimal SVG rendering for the bench reports (no plotting dependency)
# ---------------------------------------------------------------------------

_SVG_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd")


def _svg_canvas(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
    )
    return head + "".join(body) + "</svg>"


def render_residual_curves_svg(
    histories: dict[str, list[float]], width: int = 640, height: int = 420
) -> str:
    """Log-scale residual curves, one polyline per labeled history."""
    pad = 50
    floors = [min(h) for h in histories.values() if len(h)]
    tops = [max(h) for h in histories.values() if len(h)]
    lo = np.log10(max(min(floors), 1e-300))
    hi = np.log10(max(tops))
    span_x = max(len(h) for h in histories.values()) - 1 or 1
    body = []
    for i, (label, hist) in enumerate(histories.items()):
        pts = []
        for k, r in enumerate(hist):
            x = pad + (width - 2 * pad) * k / span_x
            y_frac = (np.log10(max(r, 1e-300)) - lo) / max(hi - lo, 1e-12)
            y = height - pad - (height - 2 * pad) * y_frac
            pts.append(f"{x:.1f},{y:.1f}")
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{" ".join(pts)}"/>'
        )
        body.append(
            f'<text x="{width - pad + 4}" y="{pad + 16 * i}" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    body.append(
        f'<text x="{pad}" y="{height - 12}" font-size="12">iteration</text>'
    )
    body.append(
        f'<text x="8" y="{pad - 20}" font-size="12">log10 residual</text>'
    )
    return _svg_canvas(width, height, body)


def render_rank_scatter_svg(
    ranks: list[int], iterations: list[int], width: int = 640, height: int = 420
) -> str:
    """Rank vs iteration scatter with the least-squares line."""
    pad = 50
    rmax = max(max(ranks), 1)
    imax = max(max(iterations), 1)
    body = []
    for r, it in zip(ranks, iterations):
        x = pad + (width - 2 * pad) * r / rmax
        y = height - pad - (height - 2 * pad) * it / imax
        body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="4" fill="#1f77b4"/>')
    if len(ranks) >= 2 and max(ranks) > min(ranks):
        slope, intercept = np.polyfit(np.asarray(ranks, float), np.asarray(iterations, float), 1)
        xs = [0, rmax]
        pts = []
        for xv in xs:
            x = pad + (width - 2 * pad) * xv / rmax
            yv = slope * xv + intercept
            y = height - pad - (height - 2 * pad) * yv / imax
            pts.append(f"{x:.1f},{y:.1f}")
        body.append(
            f'<polyline fill="none" stroke="#d62728" stroke-dasharray="4" '
            f'points="{" ".join(pts)}"/>'
        )
        body.append(
            f'<text x="{pad}" y="{pad - 20}" font-size="12">slope {slope:.4f}</text>'
        )
    body.append(f'<text x="{width//2}" y="{height - 12}" font-size="12">effective rank</text>')
    body.append(f'<text x="8" y="{pad - 6}" font-size="12">iterations</text>')
    return _svg_canvas(width, height, body)
