"""Experiment configuration files.

INI-style ``key = value`` files with ``[section]`` headers.  ``[run]``
holds defaults for command-line flags (dashes become underscores);
``[model]`` describes a bundled model::

    [model]
    type = switching
    dimension = 1
    modes = 2
    rates = 0 1; 1 0
    rate_bound = 1
    box_lower = -2
    box_upper = 2
    field_1_A = -1
    field_1_b = 1
    field_2_A = -1
    field_2_b = -1

Matrix rows are separated by ``;`` and entries by whitespace or commas.
"""

from __future__ import annotations

import configparser
import re

import numpy as np

from .errors import ModelError
from .models import TcpModel, affine_switching_model


def read_config(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    parser.optionxform = str  # keep key case: field_1_A differs from field_1_a
    with open(path) as fh:
        parser.read_file(fh)
    return parser


def run_defaults(parser):
    """Flag defaults from the ``[run]`` section."""
    if not parser.has_section("run"):
        return {}
    return {k.replace("-", "_"): v for k, v in parser.items("run")}


def parse_vector(text):
    return np.array([float(v) for v in re.split(r"[,\s]+", text.strip()) if v], dtype=float)


def parse_matrix(text):
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ModelError(f"malformed matrix {text!r}")
    return np.vstack(rows)


def _get(section, key, cast=str, default=None):
    if key not in section:
        if default is None:
            raise ModelError(f"[model] is missing {key!r}")
        return default
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ModelError(f"[model] {key}: {exc}") from None


def model_from_config(parser):
    """A :class:`TcpModel` or a switching model from the ``[model]`` section."""
    if not parser.has_section("model"):
        raise ModelError("configuration has no [model] section")
    sec = parser["model"]
    kind = _get(sec, "type")
    if kind == "tcp":
        return TcpModel(_get(sec, "variant", str, "linear_rate"), _get(sec, "r", float, 1.0))
    if kind != "switching":
        raise ModelError(f"unknown model type {kind!r}")
    d = _get(sec, "dimension", int)
    n = _get(sec, "modes", int)
    rates = _get(sec, "rates", parse_matrix)
    if rates.shape != (n, n):
        raise ModelError(f"rates must be {n}x{n}, got {rates.shape}")
    lower = _get(sec, "box_lower", parse_vector)
    upper = _get(sec, "box_upper", parse_vector)
    if lower.size != d or upper.size != d:
        raise ModelError("box bounds must have one entry per dimension")
    A, b = [], []
    for i in range(1, n + 1):
        A.append(_get(sec, f"field_{i}_A", parse_matrix).reshape(d, d))
        b.append(_get(sec, f"field_{i}_b", parse_vector).reshape(d))
    bound = float(sec["rate_bound"]) if "rate_bound" in sec else None
    return affine_switching_model(A, b, rates, (lower, upper), bound)
