"""File formats: JSON configurations, CSV trajectories and fields, PGM images.

Configuration documents have the top-level keys ``kernel``, ``atoms``,
``integrator``, ``similarity`` and ``optimizer``; only ``kernel`` and
``atoms`` are required.  Floats are written with Python's shortest
round-trip representation, so a save/load cycle reproduces every value
bit for bit.  See the README for the full schema.
"""

import json
import os
from dataclasses import dataclass, field, fields

import numpy as np

from ..epdiff import DEFAULT_STEPS, FORWARD
from ..errors import InputError
from ..kernel import KernelSpec
from ..momenta import Atom, MomentumConfig
from ..registration import OptimizerOptions

CONFIG_KEYS = ("kernel", "atoms", "integrator", "similarity", "optimizer")


@dataclass(frozen=True)
class ConfigDocument:
    config: MomentumConfig
    integrator: dict = field(default_factory=dict)
    similarity: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    base_dir: str = "."

    @property
    def steps(self):
        return int(self.integrator.get("steps", DEFAULT_STEPS))

    @property
    def direction(self):
        return self.integrator.get("direction", FORWARD)

    def optimizer_options(self):
        known = {f.name for f in fields(OptimizerOptions)}
        unknown = set(self.optimizer) - known
        if unknown:
            raise InputError(f"unknown optimizer settings: {sorted(unknown)}")
        return OptimizerOptions(**self.optimizer)

    def resolve(self, path):
        """Resolve a path from the document relative to its directory."""
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def config_to_dict(config, integrator=None, similarity=None, optimizer=None):
    doc = {
        "kernel": {"sigma": float(config.kernel.sigma), "dim": int(config.kernel.dim)},
        "atoms": [
            {"x0": a.x0.tolist(), "z": a.z.tolist(), "Z": a.Z.tolist()} for a in config.atoms
        ],
    }
    for key, value in (("integrator", integrator), ("similarity", similarity), ("optimizer", optimizer)):
        if value:
            doc[key] = value
    return doc


def config_from_dict(doc, base_dir="."):
    if not isinstance(doc, dict):
        raise InputError("configuration must be a JSON object")
    unknown = set(doc) - set(CONFIG_KEYS)
    if unknown:
        raise InputError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        k = doc["kernel"]
        kernel = KernelSpec(float(k["sigma"]), int(k.get("dim", 2)))
        atoms = tuple(
            Atom(a["x0"], a.get("z", [0.0] * kernel.dim), a.get("Z")) for a in doc["atoms"]
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed configuration: missing or invalid {exc}") from exc
    except ValueError as exc:
        raise InputError(f"malformed configuration: {exc}") from exc
    sections = {}
    for key in ("integrator", "similarity", "optimizer"):
        value = doc.get(key, {})
        if not isinstance(value, dict):
            raise InputError(f"configuration section {key!r} must be an object")
        sections[key] = value
    return ConfigDocument(MomentumConfig(kernel, atoms), base_dir=base_dir, **sections)


def save_config(path, config, integrator=None, similarity=None, optimizer=None):
    with open(path, "w") as fh:
        json.dump(config_to_dict(config, integrator, similarity, optimizer), fh, indent=2)
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _state_columns(d):
    idx = range(d)
    cols = [f"x{i}" for i in idx]
    cols += [f"J{i}{j}" for i in idx for j in idx]
    cols += [f"mu{i}" for i in idx]
    cols += [f"W{i}{j}" for i in idx for j in idx]
    return cols


def write_trajectories(path, geodesic):
    """One row per (node, atom): ``t, atom, x, J, mu, W`` (matrices row-major)."""
    n, d = geodesic.config.n_atoms, geodesic.config.dim
    rows = []
    for s in geodesic.states:
        for k in range(n):
            rows.append(
                np.concatenate([[s.t, k], s.x[k], s.J[k].ravel(), s.mu[k], s.W[k].ravel()])
            )
    header = ",".join(["t", "atom"] + _state_columns(d))
    np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="", fmt="%.17g")


def write_field(path, scalar_field):
    """CSV rows of node coordinates followed by the field value."""
    names = ["x", "y", "z"][: scalar_field.grid.dim] + ["value"]
    np.savetxt(
        path, scalar_field.rows(), delimiter=",", header=",".join(names), comments="", fmt="%.17g"
    )


def write_points(path, grid_points, warped):
    d = grid_points.shape[1]
    names = [f"p{i}" for i in range(d)] + [f"phi{i}" for i in range(d)]
    np.savetxt(
        path, np.column_stack([grid_points, warped]), delimiter=",",
        header=",".join(names), comments="", fmt="%.17g",
    )


def _pgm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise InputError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path):
    """Read a P2 or P5 PGM file as a float array in ``[0, 1]`` (divided by maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise InputError(f"{path}: malformed PGM header") from exc
    if w < 1 or h < 1 or not (0 < maxval < 65536):
        raise InputError(f"{path}: invalid PGM dimensions or maxval")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos + 1 : pos + 1 + w * h * dtype.itemsize]
        if len(raw) != w * h * dtype.itemsize:
            raise InputError(f"{path}: truncated PGM pixel data")
        pixels = np.frombuffer(raw, dtype=dtype).astype(float)
    elif magic == b"P2":
        try:
            pixels = np.array(data[pos:].split(), dtype=float)
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric PGM pixel data") from exc
        if pixels.size != w * h:
            raise InputError(f"{path}: expected {w * h} pixels, found {pixels.size}")
    else:
        raise InputError(f"{path}: not a PGM file (magic {magic!r})")
    return np.clip(pixels.reshape(h, w) / maxval, 0.0, 1.0)


def write_pgm(path, image, window=None):
    """Write an 8-bit P5 PGM; values are mapped linearly from ``window`` to 0..255.

    ``window`` defaults to the image range and is recorded in a header comment.
    """
    a = np.asarray(image, dtype=float)
    if a.ndim != 2:
        raise InputError("only 2D images can be written as PGM")
    lo, hi = (float(a.min()), float(a.max())) if window is None else map(float, window)
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.clip(np.rint((a - lo) * scale), 0, 255).astype(np.uint8)
    h, w = pix.shape
    header = f"P5\n# window {lo!r} {hi!r}\n{w} {h}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + pix.tobytes())


def field_image(scalar_field):
    """2D field values arranged as an image (rows along the second axis)."""
    if scalar_field.grid.dim != 2:
        raise InputError("only 2D fields can be rendered")
    return scalar_field.values.T
