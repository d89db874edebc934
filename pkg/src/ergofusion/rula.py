"""Joint-angle extraction and RULA scoring of fused 3D landmarks.

Scores follow the standard RULA worksheet: posture band scores for the
arm/wrist group combine through Table A, neck/trunk/legs through
Table B, and the two totals (plus muscle-use and force adjustments)
yield the grand score 1..7 through Table C. Left and right arms are
scored independently and the reported breakdown is the worse side.

The twelve-landmark set carries no hand landmarks, so wrist flexion
defaults to 0 (score 1) and wrist twist to 1; both can be overridden
through :class:`RulaAdjustments`.

Band edges applied to angles estimated from noisy fused landmarks need
small dead zones: an upright trunk and a level head measure as a few
tenths of a degree rather than exactly zero, so "upright" tolerates
``TRUNK_UPRIGHT_DEG`` and neck/trunk extension starts beyond
``EXTENSION_DEADBAND_DEG`` of backward lean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .skeleton import LandmarkFrame, LandmarkId, LANDMARK_INDEX, N_ALL, N_FUSED

# Posture scores combine through the standard worksheet tables.
# TABLE_A[upper_arm-1][lower_arm-1][wrist-1][wrist_twist-1]
TABLE_A = np.array([
    [[[1, 2], [2, 2], [2, 3], [3, 3]],
     [[2, 2], [2, 2], [3, 3], [3, 3]],
     [[2, 3], [3, 3], [3, 3], [4, 4]]],
    [[[2, 3], [3, 3], [3, 4], [4, 4]],
     [[3, 3], [3, 3], [3, 4], [4, 4]],
     [[3, 4], [4, 4], [4, 4], [5, 5]]],
    [[[3, 3], [4, 4], [4, 4], [5, 5]],
     [[3, 4], [4, 4], [4, 4], [5, 5]],
     [[4, 4], [4, 4], [4, 5], [5, 5]]],
    [[[4, 4], [4, 4], [4, 5], [5, 5]],
     [[4, 4], [4, 4], [4, 5], [5, 5]],
     [[4, 4], [4, 5], [5, 5], [6, 6]]],
    [[[5, 5], [5, 5], [5, 6], [6, 7]],
     [[5, 6], [6, 6], [6, 7], [7, 7]],
     [[6, 6], [6, 7], [7, 7], [7, 8]]],
    [[[7, 7], [7, 7], [7, 8], [8, 9]],
     [[8, 8], [8, 8], [8, 9], [9, 9]],
     [[9, 9], [9, 9], [9, 9], [9, 9]]],
], dtype=int)

# TABLE_B[neck-1][trunk-1][legs-1]
TABLE_B = np.array([
    [[1, 3], [2, 3], [3, 4], [5, 5], [6, 6], [7, 7]],
    [[2, 3], [2, 3], [4, 5], [5, 5], [6, 7], [7, 7]],
    [[3, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 7]],
    [[5, 5], [5, 6], [6, 7], [7, 7], [7, 7], [8, 8]],
    [[7, 7], [7, 7], [7, 8], [8, 8], [8, 8], [8, 8]],
    [[8, 8], [8, 8], [8, 8], [8, 9], [9, 9], [9, 9]],
], dtype=int)

# TABLE_C[wrist_arm-1][neck_trunk_leg-1]; inputs clamp to 8 and 7.
TABLE_C = np.array([
    [1, 2, 3, 3, 4, 5, 5],
    [2, 2, 3, 4, 4, 5, 5],
    [3, 3, 3, 4, 4, 5, 6],
    [3, 3, 3, 4, 5, 6, 6],
    [4, 4, 4, 5, 6, 7, 7],
    [4, 4, 5, 6, 6, 7, 7],
    [5, 5, 6, 6, 7, 7, 7],
    [5, 5, 6, 7, 7, 7, 7],
], dtype=int)

TRUNK_UPRIGHT_DEG = 2.0
EXTENSION_DEADBAND_DEG = 5.0
WRIST_NEUTRAL_DEG = 1.0
GROUND_CONTACT_M = 0.05

# Normalized joint-stress bands: (band_min, band_max) with band_max the
# onset of the worst worksheet band for that joint.
STRESS_BANDS: dict[str, tuple[float, float]] = {
    "upper_arm_left": (0.0, 90.0),
    "upper_arm_right": (0.0, 90.0),
    "lower_arm_left": (0.0, 100.0),
    "lower_arm_right": (0.0, 100.0),
    "wrist_left": (0.0, 15.0),
    "wrist_right": (0.0, 15.0),
    "neck": (0.0, 20.0),
    "trunk": (0.0, 60.0),
}
STRESS_JOINTS = tuple(STRESS_BANDS)


class RulaError(ValueError):
    """Invalid ergonomics input."""


class IncompleteFrameError(RulaError):
    """A fused landmark required for angle extraction is missing."""


@dataclass(frozen=True)
class JointAngles:
    """Joint flexion angles in degrees (positive = forward flexion)."""

    upper_arm_left: float
    upper_arm_right: float
    lower_arm_left: float
    lower_arm_right: float
    wrist_left: float
    wrist_right: float
    neck: float
    trunk: float
    legs_supported: bool
    aux_present: bool = True

    def __post_init__(self):
        for name in ("upper_arm_left", "upper_arm_right", "lower_arm_left",
                     "lower_arm_right", "wrist_left", "wrist_right",
                     "neck", "trunk"):
            v = getattr(self, name)
            if not (math.isfinite(v) and -180.0 <= v <= 180.0):
                raise RulaError(f"{name}={v!r} outside [-180, 180]")


@dataclass(frozen=True)
class RulaAdjustments:
    """Worksheet adjustments not derivable from body landmarks."""

    muscle_use_a: int = 0
    force_a: int = 0
    muscle_use_b: int = 0
    force_b: int = 0
    wrist_twist: int = 1

    def __post_init__(self):
        if self.wrist_twist not in (1, 2):
            raise RulaError("wrist_twist must be 1 or 2")
        for name in ("muscle_use_a", "force_a", "muscle_use_b", "force_b"):
            if getattr(self, name) < 0:
                raise RulaError(f"{name} must be >= 0")


@dataclass(frozen=True)
class RulaBreakdown:
    """Step scores, table intermediates, and the grand score for one frame."""

    score_upper_arm: int
    score_lower_arm: int
    score_wrist: int
    score_wrist_twist: int
    table_a: int
    score_neck: int
    score_trunk: int
    score_legs: int
    table_b: int
    muscle_use_a: int
    force_a: int
    muscle_use_b: int
    force_b: int
    wrist_arm_score: int
    neck_trunk_leg_score: int
    grand: int
    action_level: int
    side: str


class PostureState(str, Enum):
    SAFE = "SAFE"
    WARN = "WARN"
    UNSAFE = "UNSAFE"


@dataclass(frozen=True)
class PostureStatus:
    status: PostureState
    message: str


STATUS_MESSAGES = {
    PostureState.SAFE: "posture acceptable",
    PostureState.WARN: "posture may need investigation",
    PostureState.UNSAFE: "change posture now",
}


def _angle_between(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    c = float(a @ b) / (na * nb)
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def compute_joint_angles(frame) -> JointAngles:
    """Extract RULA joint angles from one frame of 3D landmarks.

    Accepts a :class:`~ergofusion.skeleton.LandmarkFrame` or a plain
    (15, 3) array in canonical landmark order; the three auxiliary head
    rows may be NaN, in which case neck flexion is reported as 0 with
    ``aux_present=False``.

    Raises
    ------
    IncompleteFrameError
        If any of the twelve fused landmarks is missing (NaN).
    """
    xyz = frame.xyz if isinstance(frame, LandmarkFrame) else np.asarray(frame, dtype=float)
    if xyz.shape != (N_ALL, 3):
        raise RulaError(f"expected ({N_ALL}, 3) landmark array, got {xyz.shape}")
    fused_ok = np.all(np.isfinite(xyz[:N_FUSED]), axis=1)
    if not fused_ok.all():
        missing = [lm.value for lm, i in LANDMARK_INDEX.items()
                   if i < N_FUSED and not fused_ok[i]]
        raise IncompleteFrameError(f"missing fused landmarks: {missing}")

    def at(lm: LandmarkId) -> np.ndarray:
        return xyz[LANDMARK_INDEX[lm]]

    hip_mid = (at(LandmarkId.LEFT_HIP) + at(LandmarkId.RIGHT_HIP)) / 2.0
    sho_mid = (at(LandmarkId.LEFT_SHOULDER) + at(LandmarkId.RIGHT_SHOULDER)) / 2.0
    trunk_vec = sho_mid - hip_mid
    up = np.array([0.0, 0.0, 1.0])
    across = at(LandmarkId.LEFT_HIP) - at(LandmarkId.RIGHT_HIP)
    forward = np.cross(across, up)
    fn = np.linalg.norm(forward)
    forward = forward / fn if fn > 1e-12 else np.array([1.0, 0.0, 0.0])

    trunk = _angle_between(trunk_vec, up)
    if trunk_vec @ forward < 0:
        trunk = -trunk

    aux_present = bool(np.all(np.isfinite(xyz[LANDMARK_INDEX[LandmarkId.MID_EAR]])))
    if aux_present:
        neck_vec = xyz[LANDMARK_INDEX[LandmarkId.MID_EAR]] - sho_mid
        neck = _angle_between(neck_vec, trunk_vec)
        # Sign by the forward component orthogonal to the trunk axis.
        tn = trunk_vec / max(np.linalg.norm(trunk_vec), 1e-12)
        if (neck_vec - (neck_vec @ tn) * tn) @ forward < 0:
            neck = -neck
    else:
        neck = 0.0

    trunk_down = -trunk_vec

    def upper_arm(sho: LandmarkId, elb: LandmarkId) -> float:
        vec = at(elb) - at(sho)
        ang = _angle_between(vec, trunk_down)
        return ang if vec @ forward >= 0 else -ang

    def lower_arm(sho: LandmarkId, elb: LandmarkId, wri: LandmarkId) -> float:
        interior = _angle_between(at(sho) - at(elb), at(wri) - at(elb))
        return 180.0 - interior

    legs = bool(at(LandmarkId.LEFT_ANKLE)[2] <= GROUND_CONTACT_M
                and at(LandmarkId.RIGHT_ANKLE)[2] <= GROUND_CONTACT_M)

    return JointAngles(
        upper_arm_left=upper_arm(LandmarkId.LEFT_SHOULDER, LandmarkId.LEFT_ELBOW),
        upper_arm_right=upper_arm(LandmarkId.RIGHT_SHOULDER, LandmarkId.RIGHT_ELBOW),
        lower_arm_left=lower_arm(LandmarkId.LEFT_SHOULDER, LandmarkId.LEFT_ELBOW,
                                 LandmarkId.LEFT_WRIST),
        lower_arm_right=lower_arm(LandmarkId.RIGHT_SHOULDER, LandmarkId.RIGHT_ELBOW,
                                  LandmarkId.RIGHT_WRIST),
        wrist_left=0.0, wrist_right=0.0,
        neck=neck, trunk=trunk, legs_supported=legs, aux_present=aux_present)


def upper_arm_band(angle: float) -> int:
    if angle < -20.0 - 1e-12:
        return 2
    a = abs(angle)
    if a <= 20.0:
        return 1
    if angle <= 45.0:
        return 2
    if angle <= 90.0:
        return 3
    return 4


def lower_arm_band(angle: float) -> int:
    return 1 if 60.0 <= angle <= 100.0 else 2


def wrist_band(angle: float) -> int:
    a = abs(angle)
    if a <= WRIST_NEUTRAL_DEG:
        return 1
    if a <= 15.0:
        return 2
    return 3


def neck_band(angle: float) -> int:
    if angle < -EXTENSION_DEADBAND_DEG:
        return 4
    if angle <= 10.0:
        return 1
    if angle <= 20.0:
        return 2
    return 3


def trunk_band(angle: float) -> int:
    if angle < -EXTENSION_DEADBAND_DEG:
        return 2
    a = abs(angle)
    if a <= TRUNK_UPRIGHT_DEG:
        return 1
    if angle <= 20.0:
        return 2
    if angle <= 60.0:
        return 3
    return 4


def rula_score(angles: JointAngles,
               adjustments: RulaAdjustments | None = None) -> RulaBreakdown:
    """Score one frame of joint angles through the worksheet tables.

    Both arms are banded and combined through Table A independently; the
    breakdown reports the worse side (ties resolve to the right arm, the
    working arm). The grand score is Table C at the adjusted group
    totals, rows/columns clamped to the table extent, hence 1..7.
    """
    adj = adjustments or RulaAdjustments()

    sides = {}
    for side, ua, la, wr in (
            ("left", angles.upper_arm_left, angles.lower_arm_left, angles.wrist_left),
            ("right", angles.upper_arm_right, angles.lower_arm_right, angles.wrist_right)):
        s_ua = upper_arm_band(ua)
        s_la = lower_arm_band(la)
        s_wr = wrist_band(wr)
        s_tw = adj.wrist_twist
        ta = int(TABLE_A[s_ua - 1, s_la - 1, s_wr - 1, s_tw - 1])
        sides[side] = (ta, s_ua, s_la, s_wr, s_tw)

    # Worse side lexicographically by (table A, steps); tie -> right.
    side = "right" if sides["right"] >= sides["left"] else "left"
    ta, s_ua, s_la, s_wr, s_tw = sides[side]

    s_neck = neck_band(angles.neck)
    s_trunk = trunk_band(angles.trunk)
    s_legs = 1 if angles.legs_supported else 2
    tb = int(TABLE_B[s_neck - 1, s_trunk - 1, s_legs - 1])

    wrist_arm = ta + adj.muscle_use_a + adj.force_a
    neck_trunk_leg = tb + adj.muscle_use_b + adj.force_b
    grand = int(TABLE_C[min(wrist_arm, 8) - 1, min(neck_trunk_leg, 7) - 1])
    action = 1 if grand <= 2 else 2 if grand <= 4 else 3 if grand <= 6 else 4

    return RulaBreakdown(
        score_upper_arm=s_ua, score_lower_arm=s_la, score_wrist=s_wr,
        score_wrist_twist=s_tw, table_a=ta,
        score_neck=s_neck, score_trunk=s_trunk, score_legs=s_legs, table_b=tb,
        muscle_use_a=adj.muscle_use_a, force_a=adj.force_a,
        muscle_use_b=adj.muscle_use_b, force_b=adj.force_b,
        wrist_arm_score=wrist_arm, neck_trunk_leg_score=neck_trunk_leg,
        grand=grand, action_level=action, side=side)


def classify_posture(breakdown: RulaBreakdown) -> PostureStatus:
    """Map the grand score to the operator-facing status message."""
    if breakdown.grand <= 2:
        state = PostureState.SAFE
    elif breakdown.grand <= 4:
        state = PostureState.WARN
    else:
        state = PostureState.UNSAFE
    return PostureStatus(status=state, message=STATUS_MESSAGES[state])


AREA_FIELDS = {
    "neck": "score_neck",
    "trunk": "score_trunk",
    "legs": "score_legs",
    "upper_arm": "score_upper_arm",
    "lower_arm": "score_lower_arm",
    "wrist": "score_wrist",
}


def area_scores(breakdowns: Sequence[RulaBreakdown]) -> dict[str, float]:
    """Mean step score per body area over a sequence of frames."""
    if not breakdowns:
        raise RulaError("area_scores needs a non-empty sequence")
    return {area: float(np.mean([getattr(b, field_) for b in breakdowns]))
            for area, field_ in AREA_FIELDS.items()}


def joint_stress_heatmap(angle_frames: Sequence[JointAngles]) -> tuple[tuple[str, ...], np.ndarray]:
    """Per-frame normalized joint stress in [0, 1].

    Stress is (angle - band_min) / (band_max - band_min) clipped to
    [0, 1], with band_max the onset of the worst worksheet band per
    joint (see ``STRESS_BANDS``). Returns the joint-name tuple and an
    (n_frames, n_joints) array, suitable for offline heat mapping.
    """
    if not angle_frames:
        raise RulaError("joint_stress_heatmap needs a non-empty sequence")
    rows = []
    for ja in angle_frames:
        vals = {
            "upper_arm_left": ja.upper_arm_left,
            "upper_arm_right": ja.upper_arm_right,
            "lower_arm_left": ja.lower_arm_left,
            "lower_arm_right": ja.lower_arm_right,
            "wrist_left": ja.wrist_left,
            "wrist_right": ja.wrist_right,
            "neck": ja.neck,
            "trunk": ja.trunk,
        }
        row = []
        for joint in STRESS_JOINTS:
            lo, hi = STRESS_BANDS[joint]
            row.append(min(1.0, max(0.0, (vals[joint] - lo) / (hi - lo))))
        rows.append(row)
    return STRESS_JOINTS, np.array(rows)
