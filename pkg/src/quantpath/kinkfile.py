"""Versioned text format for traced paths.

Layout: fixed header lines, the initial left/margin index sets at tau = 0,
then one record per kink.  All floats are written with 17 significant
digits so that parse/serialize round-trips are byte identical.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, fingerprint
from .dualpath import Kink, KinkPath

FORMAT_NAME = "quantpath-kinks"
FORMAT_VERSION = 1


class KinkFileError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _fmt_vec(v) -> str:
    return ",".join(_fmt(x) for x in np.asarray(v, float))


def _parse_vec(s: str) -> np.ndarray:
    if not s:
        return np.zeros(0)
    return np.array([float(t) for t in s.split(",")])


def _fmt_moves(moves) -> str:
    return ";".join(f"{i}:{src}>{dst}" for i, src, dst in moves)


def _parse_moves(s: str):
    moves = []
    if not s:
        return moves
    for tok in s.split(";"):
        head, _, dst = tok.partition(">")
        idx_s, _, src = head.partition(":")
        if not dst or not src or src not in "LMR" or dst not in "LMR":
            raise KinkFileError(f"bad move record {tok!r}")
        moves.append((int(idx_s), src, dst))
    return moves


def _fmt_idx(v) -> str:
    return " ".join(str(int(i)) for i in np.asarray(v, int))


def serialize(path: KinkPath) -> str:
    lines = [
        f"{FORMAT_NAME} {FORMAT_VERSION}",
        f"status {'COMPLETE' if path.complete else 'INCOMPLETE'}",
        f"lambda {_fmt(path.lam)}",
        f"n {path.n}",
        f"d {path.d}",
        f"bias {int(path.bias_augmented)}",
        f"fingerprint {path.fingerprint}",
        f"terminal_tau {_fmt(path.terminal_tau)}",
        f"events {path.events_total}",
        f"left0 {_fmt_idx(path.initial_left)}".rstrip(),
        f"margin0 {_fmt_idx(path.initial_margin)}".rstrip(),
        f"kinks {len(path.kinks)}",
    ]
    for k in path.kinks:
        lines.append(
            f"k tau={_fmt(k.tau)} event={k.event} moves={_fmt_moves(k.moves)}"
            f" alpha={_fmt_vec(k.alpha_margin)} slope={_fmt_vec(k.dalpha_margin)}"
        )
    return "\n".join(lines) + "\n"


def _header_value(lines, i, key):
    if i >= len(lines) or not lines[i].startswith(key + " ") and lines[i] != key:
        raise KinkFileError(f"expected header line {key!r} at line {i + 1}")
    return lines[i][len(key):].strip()


def parse(text: str) -> KinkPath:
    """Parse a kink file; the result carries no labels until a dataset is
    attached via :func:`attach_dataset`."""
    lines = text.splitlines()
    if not lines:
        raise KinkFileError("empty kink file")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != FORMAT_NAME:
        raise KinkFileError("not a kink file")
    if int(magic[1]) != FORMAT_VERSION:
        raise KinkFileError(f"unsupported format version {magic[1]}")
    status = _header_value(lines, 1, "status")
    lam = float(_header_value(lines, 2, "lambda"))
    n = int(_header_value(lines, 3, "n"))
    d = int(_header_value(lines, 4, "d"))
    bias = bool(int(_header_value(lines, 5, "bias")))
    fp = _header_value(lines, 6, "fingerprint")
    terminal_tau = float(_header_value(lines, 7, "terminal_tau"))
    events = int(_header_value(lines, 8, "events"))
    left0 = _header_value(lines, 9, "left0")
    margin0 = _header_value(lines, 10, "margin0")
    k_count = int(_header_value(lines, 11, "kinks"))

    kinks = []
    for j in range(k_count):
        line = lines[12 + j]
        if not line.startswith("k "):
            raise KinkFileError(f"expected kink record at line {13 + j}")
        fields = {}
        for part in line[2:].split(" "):
            key, _, value = part.partition("=")
            fields[key] = value
        kinks.append(Kink(
            tau=float(fields["tau"]),
            event=fields["event"],
            moves=_parse_moves(fields["moves"]),
            alpha_margin=_parse_vec(fields["alpha"]),
            dalpha_margin=_parse_vec(fields["slope"]),
        ))
    if not kinks:
        raise KinkFileError("kink file contains no kinks")

    def idx_arr(s):
        return np.array([int(t) for t in s.split()], dtype=int) if s else np.zeros(0, int)

    return KinkPath(
        lam=lam, n=n, d=d, bias_augmented=bias, fingerprint=fp,
        initial_left=idx_arr(left0), initial_margin=idx_arr(margin0),
        kinks=kinks, terminal_tau=terminal_tau,
        complete=(status == "COMPLETE"), events_total=events, labels=None,
    )


def attach_dataset(path: KinkPath, ds: Dataset) -> KinkPath:
    """Bind the training dataset to a parsed path, checking the fingerprint."""
    if ds.n != path.n or ds.d != path.d:
        raise KinkFileError(
            f"dataset shape ({ds.n}, {ds.d}) does not match path ({path.n}, {path.d})")
    fp = fingerprint(ds)
    if fp != path.fingerprint:
        raise KinkFileError("dataset fingerprint does not match the kink file")
    path.labels = np.asarray(ds.labels, float)
    return path


def save(path: KinkPath, file_path) -> None:
    with open(file_path, "w", encoding="utf-8") as fh:
        fh.write(serialize(path))


def load(file_path) -> KinkPath:
    with open(file_path, "r", encoding="utf-8") as fh:
        return parse(fh.read())
