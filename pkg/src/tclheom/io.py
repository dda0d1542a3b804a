"""Deterministic CSV and JSON artifacts.

Every CSV starts with one comment line carrying the SHA-256 digest of the
resolved run configuration followed by the configuration itself, so a file
can always be traced back to the exact inputs that produced it. Floats are
written with 12 significant digits in scientific notation.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.11e"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def header_comment(config: dict) -> str:
    return f"# config-sha256={config_digest(config)} config={canonical_json(config)}"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return FLOAT_FMT % float(x)


def write_csv(path, columns: list[str], rows, config: dict) -> Path:
    """Write ``rows`` (iterable of sequences) under a digest comment and a column header."""
    path = Path(path)
    lines = [header_comment(config), ",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Column names and float data of a numeric CSV written by :func:`write_csv`."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    names = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return names, data


def matrix_labels(prefix: str, d: int) -> list[str]:
    return [f"{prefix}_{j + 1}{k + 1}" for j in range(d) for k in range(d)]


def trajectory_columns(d: int) -> list[str]:
    return (["t"] + [f"P_{j + 1}" for j in range(d)]
            + matrix_labels("ReRho", d) + matrix_labels("ImRho", d))


def trajectory_rows(times, rdos):
    d = rdos.shape[-1]
    for t, rho in zip(times, rdos):
        yield ([t] + list(np.real(np.diagonal(rho)))
               + list(rho.real.reshape(d * d)) + list(rho.imag.reshape(d * d)))


def write_trajectory(path, times, rdos, config: dict) -> Path:
    return write_csv(path, trajectory_columns(rdos.shape[-1]), trajectory_rows(times, rdos), config)


def write_generator(path, gen, config: dict) -> Path:
    d = gen.dim
    cols = ["t"] + matrix_labels("R", d) + ["detU", "condU", "singular"]

    def rows():
        for i, t in enumerate(gen.times):
            yield ([t] + list(gen.r[i].reshape(d * d))
                   + [gen.det_u[i], gen.cond_u[i], int(gen.singular_mask[i])])

    return write_csv(path, cols, rows(), config)


def write_expansion(path, expansion, config: dict) -> Path:
    d = expansion.r_terms.shape[-1]
    cols = ["t", "order"] + matrix_labels("term", d) + matrix_labels("sum", d)

    def rows():
        for i, t in enumerate(expansion.times):
            for j, n in enumerate(expansion.orders):
                yield ([t, n] + list(expansion.r_terms[j, i].reshape(d * d))
                       + list(expansion.partial_sums[j, i].reshape(d * d)))

    return write_csv(path, cols, rows(), config)


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
