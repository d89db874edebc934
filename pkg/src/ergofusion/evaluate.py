"""Evaluation reports over run recordings.

All evaluations are pure functions of recordings on disk: they never
mutate their inputs. Reports print a human-readable table and can be
written as flat CSV/JSON records for external plotting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .recording import (FLOAT_FMT, RecordingError, SegmentRecording,
                        STREAM_FIELDS)
from .rula import JointAngles, joint_stress_heatmap
from .skeleton import FUSED_LANDMARKS

FUSION_SOURCE = "fusion"
BEST_RIG_MARGIN = 1.10


class PairingError(ValueError):
    """Pre/post recordings do not belong to the same experiment."""


# ---------------------------------------------------------------------------
# RMSE report
# ---------------------------------------------------------------------------

@dataclass
class RmseReport:
    """Per-landmark RMSE (meters) for each rig and for the fused output."""

    landmarks: tuple[str, ...]
    sources: tuple[str, ...]          # rig ids then "fusion"
    rmse: np.ndarray                  # (n_sources, n_landmarks)

    @property
    def fusion(self) -> np.ndarray:
        return self.rmse[-1]

    @property
    def rig_rmse(self) -> np.ndarray:
        return self.rmse[:-1]

    def best_rig(self) -> np.ndarray:
        return self.rig_rmse.min(axis=0)

    def worst_rig(self) -> np.ndarray:
        return self.rig_rmse.max(axis=0)

    def fusion_flags(self) -> list[str]:
        """Per landmark: how the fused column compares against the rigs."""
        flags = []
        for j in range(len(self.landmarks)):
            fused = self.fusion[j]
            best, worst = self.best_rig()[j], self.worst_rig()[j]
            if fused < best:
                flags.append("beats_best")
            elif fused <= BEST_RIG_MARGIN * best:
                flags.append("near_best")
            elif fused <= worst:
                flags.append("below_worst")
            else:
                flags.append("above_worst")
        return flags

    def to_text(self) -> str:
        width = max(len(s) for s in self.sources + ("source",)) + 2
        cols = [f"p{j + 1}" for j in range(len(self.landmarks))]
        lines = ["RMSE per landmark (m)",
                 "source".ljust(width) + " ".join(f"{c:>9}" for c in cols)]
        for i, source in enumerate(self.sources):
            cells = " ".join(f"{self.rmse[i, j]:9.4g}" for j in range(len(self.landmarks)))
            lines.append(source.ljust(width) + cells)
        lines.append("fusion flags: " + " ".join(
            f"p{j + 1}={flag}" for j, flag in enumerate(self.fusion_flags())))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "landmarks": list(self.landmarks),
            "sources": list(self.sources),
            "rmse": {source: [float(v) for v in self.rmse[i]]
                     for i, source in enumerate(self.sources)},
            "fusion_flags": self.fusion_flags(),
        }


def rmse_report(segment: SegmentRecording) -> RmseReport:
    """Compute per-landmark RMSE of each rig and the fusion vs ground truth."""
    truth = segment.ground_truth_positions()[:, :len(FUSED_LANDMARKS)]
    if truth.shape[0] == 0:
        raise RecordingError("recording has no ground-truth frames")
    fused = segment.fused_positions()[:, :len(FUSED_LANDMARKS)]
    rigs = segment.rig_positions()
    if not rigs:
        raise RecordingError("recording has no per-rig landmark stream")

    def rmse_of(est: np.ndarray) -> np.ndarray:
        sq = np.sum((est - truth) ** 2, axis=2)  # (F, N)
        return np.sqrt(np.nanmean(sq, axis=0))

    sources = tuple(sorted(rigs)) + (FUSION_SOURCE,)
    table = np.vstack([rmse_of(rigs[r][:, :len(FUSED_LANDMARKS)])
                       for r in sorted(rigs)] + [rmse_of(fused)])
    return RmseReport(landmarks=tuple(lm.value for lm in FUSED_LANDMARKS),
                      sources=sources, rmse=table)


# ---------------------------------------------------------------------------
# RULA before/after comparison
# ---------------------------------------------------------------------------

AREA_COLUMNS = {
    "neck": "score_neck",
    "trunk": "score_trunk",
    "legs": "score_legs",
    "upper_arm": "score_upper_arm",
    "lower_arm": "score_lower_arm",
    "wrist": "score_wrist",
}

ANGLE_COLUMNS = ("upper_arm_left", "upper_arm_right", "lower_arm_left",
                 "lower_arm_right", "wrist_left", "wrist_right", "neck", "trunk")


@dataclass
class RulaComparison:
    """Paired pre/post RULA statistics, optionally over a stature grid."""

    pairs: list[dict]                 # one row per (stature, seed) pair
    area_means: dict[str, tuple[float, float]]
    angle_rows: list[tuple]           # (phase, stature, seed, frame, joint, angle)

    def mean_grand_by_stature(self) -> dict[float, tuple[float, float]]:
        acc: dict[float, list[tuple[float, float]]] = {}
        for row in self.pairs:
            acc.setdefault(row["stature"], []).append(
                (row["pre_mean_grand"], row["post_mean_grand"]))
        return {s: (float(np.mean([p for p, _ in v])), float(np.mean([q for _, q in v])))
                for s, v in sorted(acc.items())}

    def area_improvements(self) -> dict[str, float]:
        return {area: pre - post for area, (pre, post) in self.area_means.items()}

    def to_text(self) -> str:
        lines = ["mean grand RULA (pre -> post)"]
        for stature, (pre, post) in self.mean_grand_by_stature().items():
            lines.append(f"  stature {stature:4.2f}: {pre:5.3f} -> {post:5.3f}")
        lines.append("per-area mean step scores (pre -> post)")
        for area, (pre, post) in self.area_means.items():
            lines.append(f"  {area:<10} {pre:5.3f} -> {post:5.3f}")
        return "\n".join(lines)


def _mean_column(segment: SegmentRecording, column: str) -> float:
    rows = segment.rula_rows()
    if not rows:
        raise RecordingError("recording has no rula stream")
    return float(np.mean([row[column] for row in rows]))


def _pair_key(segment: SegmentRecording) -> tuple:
    m = segment.manifest
    return (m.get("stature"), m.get("seed"))


def rula_compare(pre: SegmentRecording, post: SegmentRecording) -> RulaComparison:
    """Compare one paired pre/post recording."""
    return rula_compare_many([(pre, post)])


def rula_compare_many(pairs: list[tuple[SegmentRecording, SegmentRecording]]) -> RulaComparison:
    """Compare paired recordings; every pair must share stature and seed."""
    if not pairs:
        raise PairingError("no pre/post recording pairs to compare")
    rows = []
    area_acc = {area: ([], []) for area in AREA_COLUMNS}
    angle_rows: list[tuple] = []
    for pre, post in pairs:
        if _pair_key(pre) != _pair_key(post):
            raise PairingError(
                f"pre recording (stature, seed) {_pair_key(pre)} does not match "
                f"post {_pair_key(post)}")
        stature, seed = _pair_key(pre)
        rows.append({
            "stature": stature,
            "seed": seed,
            "pre_mean_grand": _mean_column(pre, "grand"),
            "post_mean_grand": _mean_column(post, "grand"),
        })
        for phase, segment in (("pre", pre), ("post", post)):
            for row in segment.rula_rows():
                for area, col in AREA_COLUMNS.items():
                    area_acc[area][0 if phase == "pre" else 1].append(row[col])
                for joint in ANGLE_COLUMNS:
                    angle_rows.append((phase, stature, seed, row["frame"],
                                       joint, row[joint]))
    area_means = {area: (float(np.mean(pre_vals)), float(np.mean(post_vals)))
                  for area, (pre_vals, post_vals) in area_acc.items()}
    return RulaComparison(pairs=rows, area_means=area_means, angle_rows=angle_rows)


def collect_segments(root, segment_name: str | None = None) -> list[SegmentRecording]:
    """Find segment recordings under ``root`` (itself, or nested run dirs)."""
    root = Path(root)
    if (root / "manifest.json").exists():
        return [SegmentRecording.load(root)]
    found = []
    for manifest in sorted(root.rglob("manifest.json")):
        seg = SegmentRecording.load(manifest.parent)
        if segment_name is None or seg.manifest.get("segment") == segment_name:
            found.append(seg)
    if not found:
        raise RecordingError(f"no segment recordings under {root}")
    return found


def _collect_preferring(root, want: str) -> list[SegmentRecording]:
    segments = collect_segments(root)
    named = [s for s in segments if s.manifest.get("segment") == want]
    return named or segments


def pair_recordings(pre_root, post_root) -> list[tuple[SegmentRecording, SegmentRecording]]:
    """Pair recordings under two roots by (stature, seed).

    When a root holds both segments of adaptation runs, the pre root
    contributes its ``pre`` segments and the post root its ``post``.
    """
    pre_segments = _collect_preferring(pre_root, "pre")
    post_segments = _collect_preferring(post_root, "post")
    post_by_key = {}
    for seg in post_segments:
        key = _pair_key(seg)
        if key in post_by_key:
            raise PairingError(f"duplicate post recording for (stature, seed)={key}")
        post_by_key[key] = seg
    pairs = []
    for pre in pre_segments:
        key = _pair_key(pre)
        if key not in post_by_key:
            raise PairingError(f"no post recording pairs (stature, seed)={key}")
        pairs.append((pre, post_by_key.pop(key)))
    if post_by_key:
        raise PairingError(
            f"unpaired post recordings for (stature, seed) in {sorted(post_by_key)}")
    return pairs


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

EXPORT_KINDS = ("landmarks", "rula", "heatmap")
EXPORT_FORMATS = ("csv", "json")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def _write_records(header: tuple[str, ...], rows: list[tuple], fmt: str,
                   out_path: Path) -> Path:
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        out_path.write_text("\n".join(lines) + "\n")
    else:
        records = [dict(zip(header, row)) for row in rows]
        out_path.write_text(json.dumps(records, indent=1, default=float) + "\n")
    return out_path


def export(segment: SegmentRecording, what: str, fmt: str, out_path) -> Path:
    """Write one stream of a recording as flat CSV or JSON records.

    ``landmarks`` exports the fused landmark stream, ``rula`` the
    per-frame scoring stream, and ``heatmap`` the normalized per-joint
    stress values derived from the recorded joint angles.
    """
    if what not in EXPORT_KINDS:
        raise ValueError(f"unknown export {what!r}; choose from {EXPORT_KINDS}")
    if fmt not in EXPORT_FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {EXPORT_FORMATS}")
    out_path = Path(out_path)

    if what == "landmarks":
        header = ("frame", "landmark", "x", "y", "z", "source")
        rows = list(segment.streams["fused_landmarks"])
        return _write_records(header, rows, fmt, out_path)

    if what == "rula":
        fields = tuple(name for name, _ in STREAM_FIELDS["rula"])
        rows = list(segment.streams["rula"])
        return _write_records(fields, rows, fmt, out_path)

    rows_out: list[tuple] = []
    rula_rows = segment.rula_rows()
    if not rula_rows:
        raise RecordingError("recording has no rula stream to derive a heatmap from")
    angles = [JointAngles(
        upper_arm_left=row["upper_arm_left"], upper_arm_right=row["upper_arm_right"],
        lower_arm_left=row["lower_arm_left"], lower_arm_right=row["lower_arm_right"],
        wrist_left=row["wrist_left"], wrist_right=row["wrist_right"],
        neck=row["neck"], trunk=row["trunk"],
        legs_supported=bool(row["legs_supported"]),
        aux_present=bool(row["aux_present"])) for row in rula_rows]
    joints, stress = joint_stress_heatmap(angles)
    for row, frame_stress in zip(rula_rows, stress):
        for joint, value in zip(joints, frame_stress):
            rows_out.append((row["frame"], joint, value))
    return _write_records(("frame", "joint", "stress"), rows_out, fmt, out_path)


def write_comparison(comparison: RulaComparison, out_dir) -> dict[str, Path]:
    """Write the paired comparison as three plot-ready flat files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    grand_rows = [(row["stature"], row["seed"], row["pre_mean_grand"],
                   row["post_mean_grand"]) for row in comparison.pairs]
    paths["grand"] = _write_records(
        ("stature", "seed", "pre_mean_grand", "post_mean_grand"),
        grand_rows, "csv", out_dir / "grand_by_stature.csv")

    area_rows = [(area, pre, post, pre - post)
                 for area, (pre, post) in comparison.area_means.items()]
    paths["areas"] = _write_records(
        ("area", "pre_mean", "post_mean", "improvement"),
        area_rows, "csv", out_dir / "area_means.csv")

    paths["angles"] = _write_records(
        ("phase", "stature", "seed", "frame", "joint", "angle"),
        comparison.angle_rows, "csv", out_dir / "angle_distributions.csv")
    return paths
