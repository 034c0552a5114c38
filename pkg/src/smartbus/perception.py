"""Blind-spot perception pipeline: detection, sonar gating, alerts, scoring.

The detector is a scripted stand-in for the on-device vision model: every
non-background object in the frame is a detection candidate that hits with
probability ``1 - miss_rate``, and a per-frame Bernoulli draw can inject
one spurious detection (the false-positive source).  Background clutter is
never a candidate; correctly ignoring it is what the true-negative column
counts.

Sonar power gating mirrors the hardware behaviour: the ranger is read only
on frames where the detector reports something other than a stop sign.
Stop signs route to the driver's LED instead of the collision path.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .kernels import DetRng, frame_detections, gauss_clamped

COLLISION_THRESHOLD_M = 1.0  # alarm strictly below this distance


class ObjectClass(str, Enum):
    PERSON = "person"
    CAR = "car"
    TRUCK = "truck"
    BUS = "bus"
    MOTORBIKE = "motorbike"
    STOP_SIGN = "stop_sign"
    BACKGROUND = "background"


HAZARD_CLASSES = (
    ObjectClass.PERSON,
    ObjectClass.CAR,
    ObjectClass.TRUCK,
    ObjectClass.BUS,
    ObjectClass.MOTORBIKE,
)


class ConfigError(ValueError):
    """Invalid detector/sensor configuration."""


@dataclass(frozen=True)
class TruthObject:
    object_id: str
    class_label: ObjectClass
    distance_m: float
    in_blind_zone: bool

    def __post_init__(self):
        if not (math.isfinite(self.distance_m) and self.distance_m >= 0):
            raise ValueError(f"{self.object_id}: distance_m must be finite and >= 0")

    @property
    def is_hazard(self) -> bool:
        return self.in_blind_zone and self.class_label in HAZARD_CLASSES


@dataclass(frozen=True)
class DetectedObject:
    matched_truth: Optional[str]  # None marks a spurious detection
    class_label: ObjectClass
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be within [0, 1]")


@dataclass(frozen=True)
class SonarReading:
    distance_m: float
    valid: bool


@dataclass(frozen=True)
class AlertDecision:
    sonar_active: bool
    buzzer_on: bool
    led_on: bool

    def __post_init__(self):
        if self.buzzer_on and not self.sonar_active:
            raise ValueError("buzzer cannot fire without an active sonar")


@dataclass(frozen=True)
class FrameTally:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class FrameObservation:
    frame_id: int
    timestamp: float
    truth_objects: list = field(default_factory=list)
    detections: list = field(default_factory=list)


@dataclass(frozen=True)
class DetectorModel:
    """Synthetic detector parameters; rates are per-candidate/per-frame."""

    miss_rate: float = 0.0
    spurious_rate: float = 0.0
    confidence_lo: float = 0.5
    confidence_hi: float = 1.0

    def __post_init__(self):
        for name in ("miss_rate", "spurious_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1], got {rate}")
        if not 0.0 <= self.confidence_lo <= self.confidence_hi <= 1.0:
            raise ConfigError("need 0 <= confidence_lo <= confidence_hi <= 1")


def detect_frame(
    frame_truth: Sequence[TruthObject], model: DetectorModel, rng: DetRng
) -> list[DetectedObject]:
    """Sample detector output for one frame from an existing stream."""
    candidates = [t for t in frame_truth if t.class_label is not ObjectClass.BACKGROUND]
    hits, confs, spurious = frame_detections(
        rng,
        len(candidates),
        model.miss_rate,
        model.spurious_rate,
        model.confidence_lo,
        model.confidence_hi,
    )
    detections = [
        DetectedObject(truth.object_id, truth.class_label, conf)
        for truth, hit, conf in zip(candidates, hits, confs)
        if hit
    ]
    if spurious is not None:
        pick, conf = spurious
        index = min(int(pick * len(HAZARD_CLASSES)), len(HAZARD_CLASSES) - 1)
        detections.append(DetectedObject(None, HAZARD_CLASSES[index], conf))
    return detections


def run_detector(
    frame_truth: Sequence[TruthObject], model: DetectorModel, rng_seed: int
) -> list[DetectedObject]:
    """Deterministic single-frame detector run for the given seed."""
    return detect_frame(frame_truth, model, DetRng(rng_seed))


def sonar_gate(detections: Sequence[DetectedObject]) -> bool:
    """Power the sonar only when a non-stop-sign detection exists."""
    return any(d.class_label is not ObjectClass.STOP_SIGN for d in detections)


def read_sonar_with_rng(
    nearest_truth_distance_m: float, noise_sigma_m: float, rng: DetRng
) -> SonarReading:
    if nearest_truth_distance_m < 0:
        raise ValueError("nearest_truth_distance_m must be >= 0")
    if noise_sigma_m < 0:
        raise ValueError("noise_sigma_m must be >= 0")
    return SonarReading(gauss_clamped(rng, nearest_truth_distance_m, noise_sigma_m), True)


def read_sonar(
    nearest_truth_distance_m: float, noise_sigma_m: float, rng_seed: int
) -> SonarReading:
    return read_sonar_with_rng(nearest_truth_distance_m, noise_sigma_m, DetRng(rng_seed))


def evaluate_collision(
    sonar_active: bool,
    reading: Optional[SonarReading],
    threshold_m: float = COLLISION_THRESHOLD_M,
) -> bool:
    """Buzzer verdict: active sonar and strictly inside the threshold."""
    if not sonar_active:
        return False
    if reading is None or not reading.valid:
        raise ValueError("active sonar requires a valid reading")
    return reading.distance_m < threshold_m


def evaluate_stop_sign(
    detections: Sequence[DetectedObject], confidence_threshold: float = 0.5
) -> bool:
    """LED verdict: any stop-sign detection at or above the threshold."""
    if not 0.0 <= confidence_threshold <= 1.0:
        raise ConfigError("confidence_threshold must be within [0, 1]")
    return any(
        d.class_label is ObjectClass.STOP_SIGN and d.confidence >= confidence_threshold
        for d in detections
    )


def score_frame(
    truth: Sequence[TruthObject], detections: Sequence[DetectedObject]
) -> FrameTally:
    """Tally one frame against ground truth.

    TP: detections matched to an in-zone hazard.  FP: detections with no
    matching truth.  FN: in-zone hazards nothing matched.  TN: out-of-zone
    truth objects no detection referenced (correctly ignored clutter).
    """
    truth_by_id = {t.object_id: t for t in truth}
    referenced = set()
    tp = fp = 0
    for det in detections:
        matched = truth_by_id.get(det.matched_truth) if det.matched_truth else None
        if matched is None:
            fp += 1
            continue
        referenced.add(matched.object_id)
        if matched.is_hazard:
            tp += 1
    fn = sum(1 for t in truth if t.is_hazard and t.object_id not in referenced)
    tn = sum(
        1 for t in truth if not t.in_blind_zone and t.object_id not in referenced
    )
    return FrameTally(tp, fp, fn, tn)


# --- per-frame tally log (one record per frame, field order is the contract)


class TallyFormatError(ValueError):
    """Malformed tally log line; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"tally log line {line}: {message}")
        self.line = line


def format_tally_line(
    frame_id: int, tally: FrameTally, buzzer: bool, led: bool
) -> str:
    return (
        f"{frame_id},{tally.tp},{tally.fp},{tally.fn},{tally.tn},"
        f"{int(buzzer)},{int(led)}"
    )


def parse_tally_log(lines) -> list[tuple[int, FrameTally, bool, bool]]:
    rows = []
    for line_no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = text.split(",")
        if len(parts) != 7:
            raise TallyFormatError(line_no, f"expected 7 fields, got {len(parts)}")
        try:
            values = [int(p) for p in parts]
        except ValueError as exc:
            raise TallyFormatError(line_no, str(exc)) from exc
        if values[5] not in (0, 1) or values[6] not in (0, 1):
            raise TallyFormatError(line_no, "buzzer/led flags must be 0 or 1")
        try:
            tally = FrameTally(*values[1:5])
        except ValueError as exc:
            raise TallyFormatError(line_no, str(exc)) from exc
        rows.append((values[0], tally, bool(values[5]), bool(values[6])))
    return rows


def parse_tally_log_file(path) -> list[tuple[int, FrameTally, bool, bool]]:
    with open(path, encoding="utf-8") as handle:
        return parse_tally_log(handle)


def write_tally_log_file(path, rows) -> None:
    """Write (frame_id, tally, buzzer, led) rows in the fixed field order."""
    with open(path, "w", encoding="utf-8") as handle:
        for frame_id, tally, buzzer, led in rows:
            handle.write(format_tally_line(frame_id, tally, buzzer, led) + "\n")
