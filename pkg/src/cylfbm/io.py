"""CSV and key=value config files used by the command line."""

from __future__ import annotations

import configparser
import csv
import io
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .fbm import FbmPathSet, TimeGrid
from .functions import SampledFunction, SimpleFunction

__all__ = [
    "FLOAT_FORMAT",
    "write_table",
    "read_table",
    "write_paths",
    "write_sampled",
    "read_sampled",
    "read_simple",
    "parse_config",
    "parse_rule",
    "parse_floats",
    "RunConfig",
]

# round-trips every double exactly
FLOAT_FORMAT = ".17g"

_SECTION = "config"


def _open_out(target):
    if hasattr(target, "write"):
        return target, False
    return open(target, "w", newline=""), True


def write_table(target, header, rows) -> None:
    """Write a header line and rows of floats with 17 significant digits."""
    out, close = _open_out(target)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(np.asarray(rows, dtype=float)):
            w.writerow([format(x, FLOAT_FORMAT) for x in row])
    finally:
        if close:
            out.close()


def read_table(source) -> tuple[list[str], np.ndarray]:
    """Header and a float matrix from a CSV file or text stream."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError("empty CSV")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric CSV entry: {exc}") from None
    if data.size and (data.ndim != 2 or data.shape[1] != len(header)):
        raise ValueError("every row needs one value per header column")
    return header, data.reshape(-1, len(header))


def write_paths(target, paths: FbmPathSet, prefix: str = "path") -> None:
    """Header t,path_0,...,path_{P-1}; one row per grid node."""
    header = ["t"] + [f"{prefix}_{p}" for p in range(paths.n_paths)]
    write_table(target, header, np.column_stack([paths.grid.nodes, paths.paths.T]))


def write_sampled(target, f: SampledFunction) -> None:
    """Header t,v_0,...; a jump at t_j is written as two rows, left limit first."""
    rows = []
    t = f.grid.nodes
    jumps = set(int(j) for j in f.jump_nodes)
    for j in range(f.grid.n + 1):
        if j in jumps:
            rows.append(np.concatenate([[t[j]], f.left_limits[j]]))
        rows.append(np.concatenate([[t[j]], f.values[j]]))
    write_table(target, ["t"] + [f"v_{k}" for k in range(f.m)], rows)


def read_sampled(source) -> SampledFunction:
    """Inverse of :func:`write_sampled`. The nodes must form a uniform grid from 0."""
    header, data = read_table(source)
    if not header or header[0] != "t" or len(header) < 2:
        raise ValueError("expected header t,v_0,...")
    t, v = data[:, 0], data[:, 1:]
    repeat = np.concatenate([[False], t[1:] == t[:-1]])
    nodes = t[~repeat]
    n = nodes.size - 1
    if n < 1:
        raise ValueError("need at least two distinct nodes")
    grid = TimeGrid(float(nodes[-1]), n)
    if nodes[0] != 0.0 or not np.allclose(nodes, grid.nodes, rtol=0, atol=1e-9 * grid.T):
        raise ValueError("nodes must be uniform and start at 0")
    if np.any(repeat[:-1] & repeat[1:]):
        raise ValueError("a node may appear at most twice")
    idx = np.cumsum(~repeat) - 1
    values = np.empty((n + 1, v.shape[1]))
    left = np.empty_like(values)
    values[idx] = v
    left[idx[::-1]] = v[::-1]
    return SampledFunction(grid, values, left)


def read_simple(source) -> SimpleFunction:
    """Step function from rows start,end,x_0,...; intervals must tile [0, T]."""
    header, data = read_table(source)
    if header[:2] != ["start", "end"] or len(header) < 3:
        raise ValueError("expected header start,end,x_0,...")
    if data.shape[0] == 0:
        raise ValueError("no intervals")
    if np.any(data[1:, 0] != data[:-1, 1]):
        raise ValueError("intervals must be contiguous")
    return SimpleFunction(np.concatenate([data[:, 0], data[-1:, 1]]), data[:, 2:])


def parse_config(source) -> dict[str, str]:
    """key = value lines (``#`` comments) as a dict of stripped strings."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string(f"[{_SECTION}]\n" + text)
    return dict(parser[_SECTION])


_RULE = re.compile(r"^\s*(?:\w+_k\s*=\s*)?(?P<scale>[-+0-9.eE]+\s*\*?\s*)?k\s*\^\s*(?P<p>[-+0-9.eE()]+)\s*$")


def parse_floats(text: str) -> np.ndarray:
    """Comma- or whitespace-separated numbers."""
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("empty list")
    return np.array([float(p) for p in parts])


def parse_rule(text: str, N: int | None = None) -> np.ndarray:
    """Sequence from "q_k = c*k^p", "k^p" (k = 1..N) or an explicit list.

    An explicit list is truncated to N when N is given and shorter lists are
    rejected.
    """
    m = _RULE.match(text)
    if m:
        if N is None:
            raise ValueError("a power rule needs the number of terms N")
        p = float(m.group("p").strip("()"))
        scale = float(m.group("scale").rstrip("* ")) if m.group("scale") else 1.0
        return scale * np.arange(1, int(N) + 1, dtype=float) ** p
    values = parse_floats(text)
    if N is not None:
        if values.size < N:
            raise ValueError(f"explicit list has {values.size} entries, need {N}")
        values = values[: int(N)]
    return values


def _fmt(x) -> str:
    return repr(x) if isinstance(x, float) else str(x)


@dataclass
class RunConfig:
    """Resolved settings of one command line run.

    ``tolerances`` holds named overrides, serialized as ``tol.<name> = value``.
    """

    verb: str
    hurst: float | None = None
    T: float = 1.0
    n: int = 64
    model: str | None = None
    seed: int = 0
    output: str | None = None
    tolerances: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "tolerances":
                lines += [f"tol.{k} = {_fmt(float(v))}" for k, v in sorted(value.items())]
            elif value is not None:
                lines.append(f"{f.name} = {_fmt(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = parse_config(io.StringIO(text))
        tol = {k[4:]: float(v) for k, v in raw.items() if k.startswith("tol.")}
        known = {f.name for f in fields(cls)} - {"tolerances"}
        unknown = set(raw) - known - {f"tol.{k}" for k in tol}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "verb" not in raw:
            raise ValueError("config needs a verb")
        kw = {"verb": raw["verb"], "tolerances": tol}
        if "hurst" in raw:
            kw["hurst"] = float(raw["hurst"])
        if "T" in raw:
            kw["T"] = float(raw["T"])
        if "n" in raw:
            kw["n"] = int(raw["n"])
        if "seed" in raw:
            kw["seed"] = int(raw["seed"])
        for key in ("model", "output"):
            if key in raw:
                kw[key] = raw[key]
        return cls(**kw)
