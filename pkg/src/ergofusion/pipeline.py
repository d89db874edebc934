"""The capture/fusion/scoring node graph and scenario runner.

Topology (one topic per edge label, single publisher each)::

    driver --world--> camera nodes (one per physical camera)
    camera --observations/<cam>--> fusion node
    fusion --per_rig_landmarks, fused_landmarks--> ergonomics, adaptation
    ergonomics --rula, posture_status--> recorder
    adaptation --adaptation--> recorder
    (recorder also subscribes world, observations, per_rig, fused)

The fusion node synchronizes per-camera messages by frame index,
triangulates each rig's landmark set, and applies the prefactored
graph-Laplacian solve; the prefactorization happens exactly once per
run (``prefactor_count`` is asserted in tests). A scenario run produces
a ``pre`` segment with the default delivery point and, when adaptation
is enabled, a paired ``post`` segment re-run with the same seed and the
adapted delivery so pre/post comparisons share their noise realization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import __version__
from .adaptation import (AnthropometricClass, RobotDeliveryParams, adapt_robot,
                         classify_height, estimate_height)
from .bus import FrameSynchronizer, Message, Node, NodeGraph, run_serial, run_threaded
from .cameras import CameraModel
from .fusion import (build_topology, compute_anchors, compute_delta, fuse,
                     prefactor)
from .recording import RunRecording, SegmentRecording
from .rula import RulaAdjustments, RulaBreakdown, JointAngles, PostureStatus, \
    classify_posture, compute_joint_angles, rula_score
from .scenario import ScenarioConfig
from .skeleton import (ALL_LANDMARKS, CameraObservations, LandmarkFrame,
                       N_ALL, N_FUSED, animate, build_skeleton, observe)
from .triangulate import Observation2D, TriangulationError, triangulate_dlt

TOPIC_WORLD = "world"
TOPIC_PER_RIG = "per_rig_landmarks"
TOPIC_FUSED = "fused_landmarks"
TOPIC_RULA = "rula"
TOPIC_STATUS = "posture_status"
TOPIC_ADAPTATION = "adaptation"

SCHEDULERS = ("serial", "threads")


class PipelineError(RuntimeError):
    """A scenario run failed after validation (mid-stream inconsistency)."""


def observation_topic(camera_id: str) -> str:
    return f"observations/{camera_id}"


@dataclass(frozen=True)
class RigEstimate:
    """One rig's triangulated landmarks for one frame (NaN where unseen)."""

    rig_id: str
    xyz: np.ndarray          # (N_ALL, 3)
    visible: np.ndarray      # (N_ALL,) both cameras saw it
    residual: np.ndarray     # (N_ALL,)


@dataclass(frozen=True)
class PerRigLandmarks:
    estimates: dict[str, RigEstimate]


@dataclass(frozen=True)
class FusedLandmarks:
    """Optimized landmark set: 12 fused rows plus auxiliary head means."""

    xyz: np.ndarray          # (N_ALL, 3)
    camera_rows: np.ndarray  # (M, 3) re-estimated rig nodes (diagnostic)


@dataclass(frozen=True)
class RulaRecord:
    angles: JointAngles
    breakdown: RulaBreakdown
    status: PostureStatus


@dataclass(frozen=True)
class AdaptationEvent:
    frame_index: int
    estimated_height: float
    stature_class: AnthropometricClass
    params: RobotDeliveryParams


class CameraNode(Node):
    """Projects ground-truth frames into one camera with seeded noise."""

    def __init__(self, camera: CameraModel, noise_sigma: float, seed: int,
                 camera_index: int):
        self.name = f"camera:{camera.id}"
        self.camera = camera
        self.noise_sigma = noise_sigma
        self.seed = seed
        self.camera_index = camera_index
        self.subscribes = (TOPIC_WORLD,)
        self.publishes = (observation_topic(camera.id),)

    def handle(self, message, publish):
        frame: LandmarkFrame = message.payload
        # Noise keyed by (seed, camera, frame) only: identical across
        # scheduler modes and across paired pre/post segments.
        rng = None
        if self.noise_sigma > 0:
            rng = np.random.default_rng((self.seed, self.camera_index, frame.index))
        obs = observe(self.camera, frame, self.noise_sigma, rng)
        publish(Message(self.publishes[0], message.frame_index,
                        message.timestamp, obs))


class FusionNode(Node):
    """Synchronizes cameras, triangulates per rig, applies the fused solve."""

    name = "fusion"

    def __init__(self, rigs, frame_rate: float):
        self.rigs = list(rigs)
        self.frame_rate = frame_rate
        camera_ids = [cam.id for rig in self.rigs for cam in rig.cameras]
        self.subscribes = tuple(observation_topic(c) for c in camera_ids)
        self.publishes = (TOPIC_PER_RIG, TOPIC_FUSED)
        self.synchronizer = FrameSynchronizer(camera_ids)
        self.rig_positions = np.array([rig.left.position for rig in self.rigs])
        # Static run-long topology: every rig covers every fused landmark.
        self.topology = build_topology(
            np.ones((len(self.rigs), N_FUSED), dtype=bool))
        self.solver = prefactor(self.topology)
        self.prefactor_count = 1
        self.processing_seconds = 0.0
        self.frames = 0

    def handle(self, message, publish):
        obs: CameraObservations = message.payload
        for frame_index, bundle in self.synchronizer.add(
                obs.camera_id, message.frame_index, obs):
            self._process(frame_index, bundle, publish)

    def finish(self, publish):
        for frame_index, bundle in self.synchronizer.finish():
            self._process(frame_index, bundle, publish)

    def _process(self, frame_index: int, bundle: dict, publish):
        t0 = time.perf_counter()
        estimates = {}
        n_rigs = len(self.rigs)
        est_xyz = np.full((n_rigs, N_ALL, 3), np.nan)
        vis = np.zeros((n_rigs, N_ALL), dtype=bool)
        for r, rig in enumerate(self.rigs):
            left: CameraObservations = bundle[rig.left.id]
            right: CameraObservations = bundle[rig.right.id]
            both = left.visible & right.visible
            residual = np.full(N_ALL, np.nan)
            for i in np.flatnonzero(both):
                try:
                    point = triangulate_dlt((
                        Observation2D(rig.left.id, left.uv[i], rig.left.projection),
                        Observation2D(rig.right.id, right.uv[i], rig.right.projection)))
                except TriangulationError as exc:
                    raise PipelineError(
                        f"frame {frame_index}: rig {rig.id} failed to "
                        f"triangulate {ALL_LANDMARKS[i].value}: {exc}") from exc
                est_xyz[r, i] = point.xyz
                residual[i] = point.residual_norm
            vis[r] = both
            estimates[rig.id] = RigEstimate(rig_id=rig.id, xyz=est_xyz[r],
                                            visible=both, residual=residual)

        fused_vis = vis[:, :N_FUSED]
        if not np.array_equal(fused_vis, self.topology.adjacency):
            missing = np.argwhere(self.topology.adjacency & ~fused_vis)
            raise PipelineError(
                f"frame {frame_index}: visibility changed mid-run (topology is "
                f"fixed); missing rig/landmark pairs {missing.tolist()}")
        anchors = compute_anchors(est_xyz[:, :N_FUSED], fused_vis, self.rig_positions)
        delta = compute_delta(self.topology, anchors.configuration)
        solution = fuse(self.solver, delta, anchors)

        xyz = np.full((N_ALL, 3), np.nan)
        xyz[:N_FUSED] = solution[:N_FUSED]
        aux_vis = vis[:, N_FUSED:]
        counts = aux_vis.sum(axis=0)
        summed = np.where(aux_vis[:, :, None], est_xyz[:, N_FUSED:], 0.0).sum(axis=0)
        seen = counts > 0
        xyz[N_FUSED:][seen] = summed[seen] / counts[seen, None]

        self.processing_seconds += time.perf_counter() - t0
        self.frames += 1
        ts = frame_index / self.frame_rate
        publish(Message(TOPIC_PER_RIG, frame_index, ts, PerRigLandmarks(estimates)))
        publish(Message(TOPIC_FUSED, frame_index, ts,
                        FusedLandmarks(xyz=xyz, camera_rows=solution[N_FUSED:])))


class ErgonomicsNode(Node):
    """Scores fused frames and emits operator-facing posture status."""

    name = "ergonomics"
    subscribes = (TOPIC_FUSED,)
    publishes = (TOPIC_RULA, TOPIC_STATUS)

    def __init__(self, adjustments: RulaAdjustments):
        self.adjustments = adjustments
        self.processing_seconds = 0.0

    def handle(self, message, publish):
        fused: FusedLandmarks = message.payload
        t0 = time.perf_counter()
        angles = compute_joint_angles(fused.xyz)
        breakdown = rula_score(angles, self.adjustments)
        status = classify_posture(breakdown)
        self.processing_seconds += time.perf_counter() - t0
        record = RulaRecord(angles=angles, breakdown=breakdown, status=status)
        publish(Message(TOPIC_RULA, message.frame_index, message.timestamp, record))
        publish(Message(TOPIC_STATUS, message.frame_index, message.timestamp, status))


class AdaptationNode(Node):
    """Estimates operator height over the warm-up window, adapts once."""

    name = "adaptation"
    subscribes = (TOPIC_FUSED,)
    publishes = (TOPIC_ADAPTATION,)

    def __init__(self, default_params: RobotDeliveryParams, warmup_frames: int,
                 enabled: bool):
        self.default_params = default_params
        self.warmup_frames = warmup_frames
        self.enabled = enabled
        self.event: AdaptationEvent | None = None
        self._frames: list[np.ndarray] = []

    def handle(self, message, publish):
        if not self.enabled or self.event is not None:
            return
        fused: FusedLandmarks = message.payload
        self._frames.append(fused.xyz)
        if len(self._frames) >= self.warmup_frames:
            height = estimate_height(self._frames)
            stature_class = classify_height(height)
            params = adapt_robot(stature_class, self.default_params)
            self.event = AdaptationEvent(
                frame_index=message.frame_index, estimated_height=height,
                stature_class=stature_class, params=params)
            self._frames.clear()
            publish(Message(TOPIC_ADAPTATION, message.frame_index,
                            message.timestamp, self.event))


class RecorderNode(Node):
    """Buffers every stream and canonicalizes row order at the end."""

    name = "recorder"
    publishes = ()

    def __init__(self, recording: SegmentRecording, camera_ids):
        self.recording = recording
        self.subscribes = (TOPIC_WORLD, TOPIC_PER_RIG, TOPIC_FUSED, TOPIC_RULA,
                           TOPIC_STATUS, TOPIC_ADAPTATION) + tuple(
            observation_topic(c) for c in camera_ids)
        self.status_counts: dict[str, int] = {}
        self.adaptation_event: AdaptationEvent | None = None

    def handle(self, message, publish):
        topic, k, payload = message.topic, message.frame_index, message.payload
        rec = self.recording
        if topic == TOPIC_WORLD:
            frame: LandmarkFrame = payload
            for lm, pos in zip(ALL_LANDMARKS, frame.xyz):
                rec.append("ground_truth",
                           (k, lm.value, pos[0], pos[1], pos[2], int(frame.reach_ok)))
        elif topic.startswith("observations/"):
            obs: CameraObservations = payload
            for i in np.flatnonzero(obs.visible):
                rec.append("observations",
                           (k, obs.camera_id, ALL_LANDMARKS[i].value,
                            obs.uv[i, 0], obs.uv[i, 1]))
        elif topic == TOPIC_PER_RIG:
            for rig_id, est in payload.estimates.items():
                for i in np.flatnonzero(est.visible):
                    rec.append("per_rig_landmarks",
                               (k, rig_id, ALL_LANDMARKS[i].value,
                                est.xyz[i, 0], est.xyz[i, 1], est.xyz[i, 2],
                                est.residual[i], 2))
        elif topic == TOPIC_FUSED:
            fused: FusedLandmarks = payload
            for i, lm in enumerate(ALL_LANDMARKS):
                source = "fused" if i < N_FUSED else "aux"
                rec.append("fused_landmarks",
                           (k, lm.value, fused.xyz[i, 0], fused.xyz[i, 1],
                            fused.xyz[i, 2], source))
        elif topic == TOPIC_RULA:
            r: RulaRecord = payload
            a, b = r.angles, r.breakdown
            rec.append("rula", (
                k, a.upper_arm_left, a.upper_arm_right, a.lower_arm_left,
                a.lower_arm_right, a.wrist_left, a.wrist_right, a.neck, a.trunk,
                int(a.legs_supported), int(a.aux_present),
                b.score_upper_arm, b.score_lower_arm, b.score_wrist,
                b.score_wrist_twist, b.table_a,
                b.score_neck, b.score_trunk, b.score_legs, b.table_b,
                b.wrist_arm_score, b.neck_trunk_leg_score,
                b.grand, b.action_level, r.status.status.value, b.side))
        elif topic == TOPIC_STATUS:
            status: PostureStatus = payload
            key = status.status.value
            self.status_counts[key] = self.status_counts.get(key, 0) + 1
        elif topic == TOPIC_ADAPTATION:
            self.adaptation_event = payload

    def finish(self, publish):
        self.recording.sort()


def _drive(frames, frame_rate: float) -> Iterator[Message]:
    for frame in frames:
        yield Message(TOPIC_WORLD, frame.index, frame.index / frame_rate, frame)


def _run_segment(config: ScenarioConfig, segment: str, delivery: np.ndarray,
                 seed: int, scheduler: str,
                 adapt_enabled: bool) -> tuple[SegmentRecording, AdaptationEvent | None]:
    stature = config.stature
    profile = build_skeleton(stature)
    stance = config.resolve_stance(stature)
    truth = animate(profile, config.script(), delivery, stance)

    rigs = config.build_rigs()
    recording = SegmentRecording(manifest={})
    camera_ids = [cam.id for rig in rigs for cam in rig.cameras]

    camera_nodes = []
    index = 0
    for spec, rig in zip(config.rigs, rigs):
        for cam in rig.cameras:
            camera_nodes.append(CameraNode(cam, spec.noise_sigma, seed, index))
            index += 1
    fusion_node = FusionNode(rigs, config.frame_rate)
    ergo_node = ErgonomicsNode(config.adjustments)
    warmup_frames = int(config.warmup * config.frame_rate + 1e-9)
    adapt_node = AdaptationNode(RobotDeliveryParams(config.delivery),
                                warmup_frames, adapt_enabled)
    recorder = RecorderNode(recording, camera_ids)

    graph = NodeGraph(
        camera_nodes + [fusion_node, ergo_node, adapt_node, recorder],
        source_topics=(TOPIC_WORLD,))
    runner = run_serial if scheduler == "serial" else run_threaded
    runner(graph, _drive(truth.frames, config.frame_rate))

    n_frames = len(truth.frames)
    processing = fusion_node.processing_seconds + ergo_node.processing_seconds
    event = adapt_node.event or recorder.adaptation_event
    manifest = {
        "version": __version__,
        "scenario": {**config.to_dict(), "stature": stature},
        "segment": segment,
        "seed": seed,
        "stature": stature,
        "delivery_point": [float(v) for v in np.asarray(delivery)],
        "frames": n_frames,
        "dropped_frames": fusion_node.synchronizer.dropped,
        "status_counts": recorder.status_counts,
        "adaptation": None if event is None else {
            "frame_index": event.frame_index,
            "estimated_height": event.estimated_height,
            "class": event.stature_class.class_id,
            "delivery_point": [float(v) for v in event.params.delivery_point],
        },
        "stats": {
            "mean_frame_processing_ms":
                1000.0 * processing / n_frames if n_frames else 0.0,
            "prefactor_count": fusion_node.prefactor_count,
            "scheduler": scheduler,
        },
    }
    recording.manifest = manifest
    return recording, event


def run_scenario(config: ScenarioConfig, seed: int | None = None,
                 scheduler: str = "serial") -> RunRecording:
    """Execute one scenario end to end.

    Runs the scripted task once with the scenario's default delivery
    point (segment ``pre``); if adaptation is enabled, estimates the
    operator's height over the warm-up window, adapts the delivery
    height once, and re-runs the identical task and seed with the
    adapted delivery (segment ``post``).
    """
    if scheduler not in SCHEDULERS:
        raise ValueError(f"scheduler must be one of {SCHEDULERS}, got {scheduler!r}")
    if seed is None:
        seed = config.seed
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")

    pre, event = _run_segment(config, "pre", config.delivery, seed, scheduler,
                              adapt_enabled=config.adapt)
    segments = {"pre": pre}
    if config.adapt:
        if event is None:
            raise PipelineError(
                "adaptation was enabled but no adaptation event was produced "
                "(warm-up window too short?)")
        post, _ = _run_segment(config, "post", event.params.delivery_point,
                               seed, scheduler, adapt_enabled=False)
        segments["post"] = post
    return RunRecording(segments=segments)
