"""On-disk run recordings: flat, diffable record streams plus a manifest.

A segment recording is one directory holding five newline-delimited
record streams (``ground_truth``, ``observations``, ``per_rig_landmarks``,
``fused_landmarks``, ``rula``) and a ``manifest.json``. Records carry a
fixed field order, floats print with 9 significant digits, and the
manifest stores a SHA-256 digest over the stream files so determinism
checks reduce to digest comparison (run statistics live in the manifest
and deliberately stay outside the digest).

A full run recording is a directory of segment subdirectories, normally
``pre`` and ``post`` around the robot adaptation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .skeleton import ALL_LANDMARKS, LANDMARK_INDEX, N_ALL

FLOAT_FMT = "%.9g"

# Stream schemas: (field name, converter) in canonical column order.
STREAM_FIELDS: dict[str, tuple[tuple[str, type], ...]] = {
    "ground_truth": (
        ("frame", int), ("landmark", str),
        ("x", float), ("y", float), ("z", float), ("reach_ok", int)),
    "observations": (
        ("frame", int), ("camera", str), ("landmark", str),
        ("u", float), ("v", float)),
    "per_rig_landmarks": (
        ("frame", int), ("rig", str), ("landmark", str),
        ("x", float), ("y", float), ("z", float),
        ("residual", float), ("n_views", int)),
    "fused_landmarks": (
        ("frame", int), ("landmark", str),
        ("x", float), ("y", float), ("z", float), ("source", str)),
    "rula": (
        ("frame", int),
        ("upper_arm_left", float), ("upper_arm_right", float),
        ("lower_arm_left", float), ("lower_arm_right", float),
        ("wrist_left", float), ("wrist_right", float),
        ("neck", float), ("trunk", float),
        ("legs_supported", int), ("aux_present", int),
        ("score_upper_arm", int), ("score_lower_arm", int),
        ("score_wrist", int), ("score_wrist_twist", int), ("table_a", int),
        ("score_neck", int), ("score_trunk", int), ("score_legs", int),
        ("table_b", int),
        ("wrist_arm_score", int), ("neck_trunk_leg_score", int),
        ("grand", int), ("action_level", int),
        ("status", str), ("side", str)),
}
STREAM_NAMES = tuple(STREAM_FIELDS)


class RecordingError(ValueError):
    """Malformed or incomplete recording on disk."""


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


@dataclass
class SegmentRecording:
    """One segment's record streams plus its manifest."""

    manifest: dict
    streams: dict[str, list[tuple]] = field(default_factory=dict)

    def __post_init__(self):
        for name in STREAM_NAMES:
            self.streams.setdefault(name, [])

    def append(self, stream: str, row: tuple) -> None:
        fields = STREAM_FIELDS[stream]
        if len(row) != len(fields):
            raise RecordingError(
                f"stream {stream!r} expects {len(fields)} fields, got {len(row)}")
        self.streams[stream].append(row)

    def sort(self) -> None:
        """Canonicalize row order (streams may fill from concurrent nodes)."""
        for name in STREAM_NAMES:
            self.streams[name].sort(key=lambda row: (row[0],) + tuple(map(str, row[1:])))

    # -- persistence -----------------------------------------------------

    def _stream_text(self, name: str) -> str:
        header = ",".join(f for f, _ in STREAM_FIELDS[name])
        lines = [header]
        for row in self.streams[name]:
            lines.append(",".join(_format_value(v) for v in row))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in STREAM_NAMES:
            h.update(name.encode())
            h.update(self._stream_text(name).encode())
        return h.hexdigest()

    def save(self, directory) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for name in STREAM_NAMES:
            (path / f"{name}.csv").write_text(self._stream_text(name))
        manifest = dict(self.manifest)
        manifest["digest"] = self.digest()
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, directory) -> "SegmentRecording":
        path = Path(directory)
        manifest_path = path / "manifest.json"
        if not manifest_path.exists():
            raise RecordingError(f"{path} is not a segment recording (no manifest.json)")
        manifest = json.loads(manifest_path.read_text())
        streams: dict[str, list[tuple]] = {}
        for name, fields in STREAM_FIELDS.items():
            fpath = path / f"{name}.csv"
            if not fpath.exists():
                raise RecordingError(f"recording {path} is missing stream {name!r}")
            lines = fpath.read_text().splitlines()
            expect = ",".join(f for f, _ in fields)
            if not lines or lines[0] != expect:
                raise RecordingError(f"stream {name!r} has unexpected header")
            rows = []
            for line in lines[1:]:
                parts = line.split(",")
                if len(parts) != len(fields):
                    raise RecordingError(f"stream {name!r}: malformed row {line!r}")
                rows.append(tuple(conv(p) for p, (_, conv) in zip(parts, fields)))
            streams[name] = rows
        return cls(manifest=manifest, streams=streams)

    # -- typed accessors ---------------------------------------------------

    def _positions(self, stream: str, key_fields: int) -> np.ndarray:
        rows = self.streams[stream]
        n_frames = self.manifest.get("frames")
        if n_frames is None:
            n_frames = 1 + max((r[0] for r in rows), default=-1)
        out = np.full((n_frames, N_ALL, 3), np.nan)
        for row in rows:
            lm = LANDMARK_INDEX[_landmark_from_name(row[key_fields])]
            out[row[0], lm] = row[key_fields + 1:key_fields + 4]
        return out

    def ground_truth_positions(self) -> np.ndarray:
        """(F, 15, 3) array of ground-truth landmark positions."""
        return self._positions("ground_truth", 1)

    def fused_positions(self) -> np.ndarray:
        """(F, 15, 3) array of fused (and auxiliary mean) positions."""
        return self._positions("fused_landmarks", 1)

    def rig_positions(self) -> dict[str, np.ndarray]:
        """Per-rig (F, 15, 3) triangulated positions, NaN where unseen."""
        rows = self.streams["per_rig_landmarks"]
        n_frames = self.manifest.get("frames", 1 + max((r[0] for r in rows), default=-1))
        out: dict[str, np.ndarray] = {}
        for row in rows:
            frame, rig, lm_name, x, y, z = row[0], row[1], row[2], row[3], row[4], row[5]
            arr = out.setdefault(rig, np.full((n_frames, N_ALL, 3), np.nan))
            arr[frame, LANDMARK_INDEX[_landmark_from_name(lm_name)]] = (x, y, z)
        return out

    def rula_rows(self) -> list[dict]:
        fields = [f for f, _ in STREAM_FIELDS["rula"]]
        return [dict(zip(fields, row)) for row in self.streams["rula"]]


def _landmark_from_name(name: str):
    for lm in ALL_LANDMARKS:
        if lm.value == name:
            return lm
    raise RecordingError(f"unknown landmark name {name!r}")


@dataclass
class RunRecording:
    """A whole scenario run: one segment per adaptation state."""

    segments: dict[str, SegmentRecording]

    def save(self, directory) -> Path:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for name, segment in self.segments.items():
            segment.save(path / name)
        return path

    @classmethod
    def load(cls, directory) -> "RunRecording":
        path = Path(directory)
        if (path / "manifest.json").exists():
            return cls(segments={"pre": SegmentRecording.load(path)})
        segments = {}
        for child in sorted(path.iterdir()):
            if child.is_dir() and (child / "manifest.json").exists():
                segments[child.name] = SegmentRecording.load(child)
        if not segments:
            raise RecordingError(f"{path} contains no segment recordings")
        return cls(segments=segments)
