"""Stature-parameterized skeleton, reach-task animation, synthetic capture.

The digital twin stands on the ground plane (z = 0) facing +x, feet
fixed, and executes a scripted sequence of right-arm reaches. Twelve
bilateral joints (shoulders, elbows, wrists, hips, knees, ankles) are
the tracked landmark set; three auxiliary head markers (head top, nose,
mid-ear) support height estimation and neck angles but are never fused.

Segment lengths derive from stature through the classic body-segment
proportion table (Drillis/Contini): standing joint heights are
ankle 0, knee 0.285 H, hip 0.530 H, shoulder 0.818 H, head top 1.000 H,
so the vertical chain sums exactly to stature.

Motion model (kept deliberately analytic, not physical):

- the right arm tracks a cosine-eased straight-line wrist path to each
  phase target with two-segment (upper arm / forearm) elbow-down inverse
  kinematics; unreachable targets saturate at full extension and flag
  the frame;
- the trunk flexes forward only for targets below hip height,
  proportionally up to ``TRUNK_MAX_FLEXION_DEG`` at ground level;
- the neck flexes toward the tool in coarse comfort steps of
  ``NECK_COMFORT_STEPS_DEG`` keyed on how far the target sits from
  shoulder height (a simplified gaze model: the head tilts toward the
  handover point whether it is above or below the shoulder).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cameras import StereoRig

FRAME_RATE_HZ = 10.0


class SkeletonError(ValueError):
    """Invalid skeleton, script, or capture input."""


class LandmarkId(str, Enum):
    """The tracked landmarks; the first twelve are the fused set."""

    LEFT_SHOULDER = "left_shoulder"
    RIGHT_SHOULDER = "right_shoulder"
    LEFT_ELBOW = "left_elbow"
    RIGHT_ELBOW = "right_elbow"
    LEFT_WRIST = "left_wrist"
    RIGHT_WRIST = "right_wrist"
    LEFT_HIP = "left_hip"
    RIGHT_HIP = "right_hip"
    LEFT_KNEE = "left_knee"
    RIGHT_KNEE = "right_knee"
    LEFT_ANKLE = "left_ankle"
    RIGHT_ANKLE = "right_ankle"
    HEAD_TOP = "head_top"
    NOSE = "nose"
    MID_EAR = "mid_ear"


FUSED_LANDMARKS: tuple[LandmarkId, ...] = tuple(LandmarkId)[:12]
AUX_LANDMARKS: tuple[LandmarkId, ...] = tuple(LandmarkId)[12:]
ALL_LANDMARKS: tuple[LandmarkId, ...] = tuple(LandmarkId)
N_FUSED = len(FUSED_LANDMARKS)
N_ALL = len(ALL_LANDMARKS)
LANDMARK_INDEX = {lm: i for i, lm in enumerate(ALL_LANDMARKS)}

# Body-segment lengths as fractions of stature (Drillis/Contini
# proportions; ankles are pinned to the ground so the vertical chain
# ankle->knee->hip->shoulder->head_top sums exactly to 1.0).
SEGMENT_RATIOS: dict[str, float] = {
    "ankle_to_knee": 0.285,
    "knee_to_hip": 0.245,
    "hip_to_shoulder": 0.288,
    "shoulder_to_head_top": 0.182,
    "upper_arm": 0.186,
    "forearm": 0.146,
    "shoulder_width": 0.259,
    "hip_width": 0.191,
    "shoulder_to_ear": 0.112,
    "nose_forward": 0.055,
}

STATURE_RANGE = (1.2, 2.2)

# Trunk flexes only for targets below hip height, linearly up to this
# angle for a target at ground level.
TRUNK_MAX_FLEXION_DEG = 60.0
# Neck comfort steps: (|target z - shoulder z| upper bound in meters,
# flexion in degrees). Targets within 2 cm of shoulder height need no
# head tilt; beyond 6 cm the head drops to its 25 degree maximum.
NECK_COMFORT_STEPS_DEG: tuple[tuple[float, float], ...] = (
    (0.02, 0.0),
    (0.06, 15.0),
    (math.inf, 25.0),
)


@dataclass(frozen=True)
class AnthropometricProfile:
    """Stature plus the derived segment-length table (meters)."""

    stature: float
    segment_lengths: dict[str, float]

    @property
    def shoulder_height(self) -> float:
        return self.stature - self.segment_lengths["shoulder_to_head_top"]

    @property
    def hip_height(self) -> float:
        return self.shoulder_height - self.segment_lengths["hip_to_shoulder"]

    @property
    def knee_height(self) -> float:
        return self.segment_lengths["ankle_to_knee"]

    @property
    def arm_reach(self) -> float:
        return self.segment_lengths["upper_arm"] + self.segment_lengths["forearm"]


def build_skeleton(stature: float) -> AnthropometricProfile:
    """Derive segment lengths for an operator of the given stature.

    Raises
    ------
    SkeletonError
        If stature falls outside ``STATURE_RANGE``.
    """
    lo, hi = STATURE_RANGE
    if not (lo <= stature <= hi):
        raise SkeletonError(
            f"stature {stature!r} outside supported range [{lo}, {hi}] m")
    return AnthropometricProfile(
        stature=float(stature),
        segment_lengths={name: ratio * stature
                         for name, ratio in SEGMENT_RATIOS.items()})


@dataclass(frozen=True)
class MotionPhase:
    """One scripted phase: a rest (target None) or a reach to a point.

    ``target`` may be the literal string ``"delivery"`` to reference the
    scenario's delivery point, resolved at animation time.
    """

    name: str
    duration: float
    target: object = None

    def __post_init__(self):
        if self.duration <= 0:
            raise SkeletonError(f"phase {self.name!r}: duration must be > 0")


@dataclass(frozen=True)
class MotionScript:
    phases: tuple[MotionPhase, ...]
    frame_rate: float = FRAME_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.frame_rate <= 0:
            raise SkeletonError("frame_rate must be > 0")

    @property
    def total_duration(self) -> float:
        return sum(p.duration for p in self.phases)

    @property
    def n_frames(self) -> int:
        return int(self.frame_rate * self.total_duration + 1e-9)


@dataclass(frozen=True)
class LandmarkFrame:
    """All landmark positions (world meters) at one frame."""

    index: int
    xyz: np.ndarray            # (N_ALL, 3), canonical LandmarkId order
    reach_ok: bool = True

    def fused(self) -> np.ndarray:
        return self.xyz[:N_FUSED]

    def get(self, lm: LandmarkId) -> np.ndarray:
        return self.xyz[LANDMARK_INDEX[lm]]


@dataclass(frozen=True)
class GroundTruthSequence:
    frames: tuple[LandmarkFrame, ...]
    stature: float
    frame_rate: float

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    def positions(self) -> np.ndarray:
        """All frames stacked as an (F, N_ALL, 3) array."""
        return np.array([f.xyz for f in self.frames])


def trunk_flexion_for_target(profile: AnthropometricProfile, target_z: float) -> float:
    """Forward trunk flexion (degrees) adopted to work at ``target_z``."""
    hip = profile.hip_height
    if target_z >= hip:
        return 0.0
    frac = min(1.0, (hip - target_z) / hip)
    return TRUNK_MAX_FLEXION_DEG * frac


def neck_flexion_for_target(profile: AnthropometricProfile, target_z: float) -> float:
    """Head tilt (degrees) toward a tool at ``target_z`` (comfort steps)."""
    gap = abs(target_z - profile.shoulder_height)
    for bound, angle in NECK_COMFORT_STEPS_DEG:
        if gap < bound:
            return angle
    return NECK_COMFORT_STEPS_DEG[-1][1]


def _pitch(theta_deg: float) -> np.ndarray:
    """Forward-pitch rotation (about +y); positive tilts +z toward +x."""
    a = math.radians(theta_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _arm_ik(shoulder: np.ndarray, target: np.ndarray, upper: float,
            forearm: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Two-segment elbow-down IK; returns (elbow, wrist, reachable)."""
    d = target - shoulder
    dist = float(np.linalg.norm(d))
    reach = upper + forearm
    inner = abs(upper - forearm)
    reachable = inner - 1e-12 <= dist <= reach + 1e-12
    dist_eff = max(min(max(dist, inner), reach), 1e-9)
    if dist < 1e-12:
        u = np.array([0.0, 0.0, -1.0])
    else:
        u = d / dist
    # Elbow drops into the vertical plane through shoulder and target;
    # for a straight-down target the forward axis breaks the ambiguity.
    down = np.array([0.0, 0.0, -1.0])
    w = down - (u @ down) * u
    if np.linalg.norm(w) < 1e-9:
        fwd = np.array([1.0, 0.0, 0.0])
        w = fwd - (u @ fwd) * u
    w = w / np.linalg.norm(w)
    cos_a = (upper ** 2 + dist_eff ** 2 - forearm ** 2) / (2.0 * upper * dist_eff)
    cos_a = min(1.0, max(-1.0, cos_a))
    sin_a = math.sqrt(max(0.0, 1.0 - cos_a ** 2))
    elbow = shoulder + upper * (cos_a * u + sin_a * w)
    wrist = shoulder + dist_eff * u
    return elbow, wrist, reachable


def _pose(profile: AnthropometricProfile, stance: np.ndarray,
          trunk_deg: float, neck_deg: float,
          wrist_goal: np.ndarray | None, index: int) -> LandmarkFrame:
    """Assemble one frame: static lower body, pitched torso, posed arms."""
    seg = profile.segment_lengths
    half_hip = seg["hip_width"] / 2.0
    half_sho = seg["shoulder_width"] / 2.0
    hip_z = profile.hip_height
    knee_z = profile.knee_height

    xyz = np.zeros((N_ALL, 3))

    def put(lm: LandmarkId, p):
        xyz[LANDMARK_INDEX[lm]] = p

    for side, sy in ((LandmarkId.LEFT_ANKLE, half_hip), (LandmarkId.RIGHT_ANKLE, -half_hip)):
        put(side, stance + np.array([0.0, sy, 0.0]))
    for side, sy in ((LandmarkId.LEFT_KNEE, half_hip), (LandmarkId.RIGHT_KNEE, -half_hip)):
        put(side, stance + np.array([0.0, sy, knee_z]))
    for side, sy in ((LandmarkId.LEFT_HIP, half_hip), (LandmarkId.RIGHT_HIP, -half_hip)):
        put(side, stance + np.array([0.0, sy, hip_z]))

    hip_mid = stance + np.array([0.0, 0.0, hip_z])
    r_trunk = _pitch(trunk_deg)
    sho_l = hip_mid + r_trunk @ np.array([0.0, half_sho, seg["hip_to_shoulder"]])
    sho_r = hip_mid + r_trunk @ np.array([0.0, -half_sho, seg["hip_to_shoulder"]])
    put(LandmarkId.LEFT_SHOULDER, sho_l)
    put(LandmarkId.RIGHT_SHOULDER, sho_r)

    sho_mid = (sho_l + sho_r) / 2.0
    r_head = _pitch(trunk_deg + neck_deg)
    put(LandmarkId.HEAD_TOP, sho_mid + r_head @ np.array([0.0, 0.0, seg["shoulder_to_head_top"]]))
    put(LandmarkId.MID_EAR, sho_mid + r_head @ np.array([0.0, 0.0, seg["shoulder_to_ear"]]))
    put(LandmarkId.NOSE, sho_mid + r_head @ np.array([seg["nose_forward"], 0.0, seg["shoulder_to_ear"]]))

    # Left arm hangs along the (pitched) trunk-down direction.
    trunk_down = r_trunk @ np.array([0.0, 0.0, -1.0])
    put(LandmarkId.LEFT_ELBOW, sho_l + seg["upper_arm"] * trunk_down)
    put(LandmarkId.LEFT_WRIST, sho_l + profile.arm_reach * trunk_down)

    reach_ok = True
    if wrist_goal is None:
        put(LandmarkId.RIGHT_ELBOW, sho_r + seg["upper_arm"] * trunk_down)
        put(LandmarkId.RIGHT_WRIST, sho_r + profile.arm_reach * trunk_down)
    else:
        elbow, wrist, reach_ok = _arm_ik(sho_r, np.asarray(wrist_goal, dtype=float),
                                         seg["upper_arm"], seg["forearm"])
        put(LandmarkId.RIGHT_ELBOW, elbow)
        put(LandmarkId.RIGHT_WRIST, wrist)

    xyz.setflags(write=False)
    return LandmarkFrame(index=index, xyz=xyz, reach_ok=reach_ok)


def _ease(s: float) -> float:
    """Cosine ease-in-out on [0, 1]."""
    return 0.5 * (1.0 - math.cos(math.pi * min(1.0, max(0.0, s))))


def animate(profile: AnthropometricProfile, script: MotionScript,
            delivery_point, stance=(0.0, 0.0, 0.0)) -> GroundTruthSequence:
    """Run the motion script and emit the ground-truth landmark sequence.

    Phase targets equal to the string ``"delivery"`` resolve to
    ``delivery_point``. Within each phase the wrist goal moves along a
    cosine-eased straight line from the previous phase's final wrist
    position, and the trunk/neck comfort angles ease between the phase
    endpoint values; progress reaches exactly 1 at each phase's last
    frame, so reachable targets are hit to machine precision there.
    Unreachable goals saturate at full extension with ``reach_ok=False``.
    """
    delivery = np.asarray(delivery_point, dtype=float).reshape(3)
    stance = np.asarray(stance, dtype=float).reshape(3)

    resolved: list[np.ndarray | None] = []
    for phase in script.phases:
        if phase.target is None:
            resolved.append(None)
        elif isinstance(phase.target, str):
            if phase.target != "delivery":
                raise SkeletonError(
                    f"phase {phase.name!r}: unknown symbolic target {phase.target!r}")
            resolved.append(delivery)
        else:
            resolved.append(np.asarray(phase.target, dtype=float).reshape(3))

    rest = _pose(profile, stance, 0.0, 0.0, None, index=-1)
    rest_wrist = rest.get(LandmarkId.RIGHT_WRIST).copy()

    # Per-phase endpoint state: wrist keypoint and comfort angles.
    starts, ends = [], []
    wrist_prev, trunk_prev, neck_prev = rest_wrist, 0.0, 0.0
    for target in resolved:
        if target is None:
            wrist_end, trunk_end, neck_end = rest_wrist, 0.0, 0.0
        else:
            wrist_end = target
            trunk_end = trunk_flexion_for_target(profile, float(target[2]))
            neck_end = neck_flexion_for_target(profile, float(target[2]))
        starts.append((wrist_prev, trunk_prev, neck_prev))
        ends.append((wrist_end, trunk_end, neck_end))
        wrist_prev, trunk_prev, neck_prev = wrist_end, trunk_end, neck_end

    boundaries = np.cumsum([p.duration for p in script.phases])
    dt = 1.0 / script.frame_rate
    frames = []
    for k in range(script.n_frames):
        t_end = (k + 1) * dt  # progress measured at frame end
        i = int(np.searchsorted(boundaries, t_end - 1e-9))
        i = min(i, len(script.phases) - 1)
        t0 = boundaries[i] - script.phases[i].duration
        s = _ease((t_end - t0) / script.phases[i].duration)
        (w0, tr0, nk0), (w1, tr1, nk1) = starts[i], ends[i]
        trunk = tr0 + (tr1 - tr0) * s
        neck = nk0 + (nk1 - nk0) * s
        goal = w0 + (np.asarray(w1) - np.asarray(w0)) * s
        frames.append(_pose(profile, stance, trunk, neck, goal, index=k))
    return GroundTruthSequence(frames=tuple(frames), stature=profile.stature,
                               frame_rate=script.frame_rate)


@dataclass(frozen=True)
class CameraObservations:
    """One camera's noisy 2D view of one frame's landmarks."""

    camera_id: str
    frame_index: int
    uv: np.ndarray           # (N_ALL, 2); NaN where not visible
    visible: np.ndarray      # (N_ALL,) bool


def observe(camera, frame: LandmarkFrame, noise_sigma: float,
            rng: np.random.Generator | None = None) -> CameraObservations:
    """Project one frame into one camera and add per-coordinate noise.

    Landmarks at non-positive depth are marked not visible (uv NaN).
    Pass a seeded ``rng`` for reproducible noise.
    """
    if noise_sigma < 0:
        raise SkeletonError("noise_sigma must be >= 0")
    if noise_sigma > 0 and rng is None:
        rng = np.random.default_rng()
    uv, depth = camera.project_many(frame.xyz)
    visible = depth > 0
    uv = uv.copy()
    if noise_sigma > 0:
        uv += rng.normal(0.0, noise_sigma, size=uv.shape)
    uv[~visible] = np.nan
    return CameraObservations(camera_id=camera.id, frame_index=frame.index,
                              uv=uv, visible=visible)


def capture(frame: LandmarkFrame, rig: StereoRig, noise_sigma: float,
            rng: np.random.Generator | None = None) -> dict[str, CameraObservations]:
    """Project one frame into both cameras of a rig and add pixel noise.

    Gaussian noise with standard deviation ``noise_sigma`` (normalized
    image units) is added independently per coordinate, left camera
    first. Landmarks behind a camera are excluded from that camera's
    observation set. Pass a seeded ``rng`` for reproducible noise.
    """
    if noise_sigma > 0 and rng is None:
        rng = np.random.default_rng()
    return {cam.id: observe(cam, frame, noise_sigma, rng) for cam in rig.cameras}
