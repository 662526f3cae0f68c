"""
Frame I/O Module
Reads measurement frames from JSONL or CSV streams and writes them back as JSONL
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from core.conservation import DEFAULT_MAX_RANGE, mark_invalid_beams
from core.exceptions import ConserveAIError, FormatError, RecordError
from core.models import (
    BODY25_JOINTS,
    FrameKind,
    GenericFrame,
    Joint,
    MeasurementFrame,
    ScanFrame,
    SkeletonFrame,
    scan_beam_count,
)

logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "csv")

# Kept per file; the counters stay exact beyond this
MAX_LOGGED_ERRORS = 20


@dataclass
class ParseStats:
    """Record accounting of one input file"""
    total: int = 0
    parsed: int = 0
    skipped: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)

    def skip(self, line_no, message):
        self.skipped += 1
        if len(self.errors) < MAX_LOGGED_ERRORS:
            self.errors.append((line_no, message))


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise RecordError(f"'{name}' must be a finite number")
    return float(value)


def _decoded(lines):
    for line in lines:
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                line = "\x00"
        yield line


class FrameReader:
    """
    Lazy frame iterator over one input stream

    Malformed records are counted and skipped; geometry or payload-kind
    changes stop the stream with FormatError.
    """

    def __init__(self, stream, fmt="jsonl", max_range=DEFAULT_MAX_RANGE, scan_fov=None):
        """
        Initialize FrameReader

        Args:
            stream: Text or binary line iterable
            fmt: "jsonl" or "csv" (CSV carries scans only)
            max_range: Scan returns at or beyond this range are invalid
            scan_fov: Expected field of view in degrees (checks the beam count)
        """
        if fmt not in FORMATS:
            raise FormatError(f"unknown input format '{fmt}' (expected one of {', '.join(FORMATS)})")
        self.stream = stream
        self.fmt = fmt
        self.max_range = max_range
        self.scan_fov = scan_fov
        self.stats = ParseStats()
        self._kind = None
        self._geometry = None
        self._last_t = None

    def __iter__(self):
        records = self._jsonl_records() if self.fmt == "jsonl" else self._csv_records()
        for line_no, build in records:
            self.stats.total += 1
            try:
                frame = build()
                self._check_order(frame)
            except RecordError as e:
                self.stats.skip(line_no, str(e))
                logger.debug(f"Skipped record {line_no}: {e}")
                continue
            self.stats.parsed += 1
            yield frame
        self._log_summary()

    # --- JSONL ---

    def _jsonl_records(self):
        for line_no, line in enumerate(_decoded(self.stream), start=1):
            if not line.strip():
                continue
            yield line_no, lambda line=line: self._parse_json_line(line)

    def _parse_json_line(self, line):
        try:
            record = json.loads(line)
        except ValueError as e:
            raise RecordError(f"invalid JSON: {e}")
        if not isinstance(record, dict):
            raise RecordError("record is not a JSON object")
        if "t" not in record:
            raise RecordError("missing timestamp 't'")
        t = _number(record["t"], "t")

        if "joints" in record:
            return MeasurementFrame(t, self._skeleton(record["joints"]))
        if "ranges" in record:
            ranges = record["ranges"]
            if not isinstance(ranges, list):
                raise RecordError("'ranges' must be a list")
            for r in ranges:
                if r is not None:
                    _number(r, "ranges")
            return MeasurementFrame(t, self._scan(record.get("a0"), record.get("da"), ranges))
        if "channels" in record:
            channels = record["channels"]
            if not isinstance(channels, dict):
                raise RecordError("'channels' must be an object")
            return MeasurementFrame(t, GenericFrame({str(k): _number(v, k) for k, v in channels.items()}))
        raise RecordError("record carries no joints, ranges or channels")

    def _skeleton(self, entries):
        if not isinstance(entries, list):
            raise RecordError("'joints' must be a list")
        joints = {}
        for entry in entries:
            if not isinstance(entry, dict) or "id" not in entry or "p" not in entry:
                raise RecordError("joint entries need 'id' and 'p'")
            joint_id = entry["id"]
            if isinstance(joint_id, bool) or not isinstance(joint_id, int) or not 0 <= joint_id < BODY25_JOINTS:
                raise RecordError(f"joint id {joint_id!r} outside Body25 range")
            if joint_id in joints:
                raise RecordError(f"duplicate joint id {joint_id}")
            position = entry["p"]
            if not isinstance(position, list) or len(position) != 3:
                raise RecordError(f"joint {joint_id}: 'p' must hold 3 coordinates")
            confidence = entry.get("c")
            joints[joint_id] = Joint(
                tuple(_number(c, "p") for c in position),
                None if confidence is None else _number(confidence, "c"),
            )
        return SkeletonFrame(joints)

    # --- CSV ---

    def _csv_records(self):
        reader = csv.reader(_decoded(self.stream))
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        if header[:3] != ["t", "a0", "da"] or len(header) < 4:
            raise FormatError("CSV header must be 't,a0,da,r0,r1,...'")
        width = len(header)
        for row_no, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            yield row_no, lambda row=row: self._parse_csv_row(row, width)

    def _parse_csv_row(self, row, width):
        if len(row) != width:
            raise RecordError(f"row has {len(row)} columns, header has {width}")
        try:
            t, a0, da = (float(cell) for cell in row[:3])
            ranges = [float(cell) if cell.strip() else None for cell in row[3:]]
        except ValueError as e:
            raise RecordError(f"non-numeric cell: {e}")
        if not math.isfinite(t):
            raise RecordError("'t' must be a finite number")
        return MeasurementFrame(t, self._scan(a0, da, ranges))

    # --- SHARED ---

    def _scan(self, a0, da, ranges):
        a0 = _number(a0, "a0")
        da = _number(da, "da")
        if not da > 0:
            raise RecordError("'da' must be > 0")
        geometry = (a0, da, len(ranges))
        if self._geometry is None:
            if self.scan_fov is not None:
                expected = scan_beam_count(self.scan_fov, da)
                if len(ranges) != expected:
                    raise FormatError(
                        f"scan has {len(ranges)} beams, {self.scan_fov} deg / {da} deg gives {expected}"
                    )
            self._geometry = geometry
        elif geometry != self._geometry:
            raise FormatError(f"scan geometry changed from {self._geometry} to {geometry}")
        try:
            return ScanFrame(a0, da, mark_invalid_beams(ranges, self.max_range))
        except ConserveAIError as e:
            raise RecordError(str(e))

    def _check_order(self, frame):
        if self._kind is None:
            self._kind = frame.kind
        elif frame.kind is not self._kind:
            raise FormatError(f"stream switched from {self._kind.value} to {frame.kind.value} frames")
        if self._last_t is not None and frame.timestamp < self._last_t:
            raise RecordError(f"timestamp {frame.timestamp} goes back before {self._last_t}")
        self._last_t = frame.timestamp

    def _log_summary(self):
        stats = self.stats
        if stats.skipped:
            logger.warning(f"⚠️ Skipped {stats.skipped} of {stats.total} records")
            for line_no, message in stats.errors:
                logger.warning(f"   record {line_no}: {message}")
        else:
            logger.info(f"✅ Parsed {stats.parsed} records")


def parse_frames(stream, fmt="jsonl", max_range=DEFAULT_MAX_RANGE, scan_fov=None):
    """
    Parse measurement frames from a line stream

    Args:
        stream: Text or binary line iterable (file object, list of lines)
        fmt: "jsonl" or "csv"
        max_range: Invalid-return threshold for scan ranges
        scan_fov: Expected scan field of view in degrees (optional)

    Returns:
        FrameReader: iterate for frames in file order, then read ``.stats``
    """
    return FrameReader(stream, fmt, max_range, scan_fov)


# --- WRITING ---

def frame_to_record(frame):
    """JSON-ready dict of one frame"""
    payload = frame.payload
    if frame.kind is FrameKind.SKELETON:
        joints = []
        for joint_id in sorted(payload.joints):
            joint = payload.joints[joint_id]
            entry = {"id": joint_id, "p": [float(c) for c in joint.position]}
            if joint.confidence is not None:
                entry["c"] = float(joint.confidence)
            joints.append(entry)
        return {"t": frame.timestamp, "joints": joints}
    if frame.kind is FrameKind.SCAN:
        ranges = [None if np.isnan(r) else float(r) for r in payload.ranges]
        return {"t": frame.timestamp, "a0": payload.angle_start, "da": payload.angle_step, "ranges": ranges}
    return {"t": frame.timestamp, "channels": {k: float(v) for k, v in payload.channels.items()}}


def write_frames(frames, stream):
    """
    Write frames as JSONL

    Args:
        frames: Iterable of MeasurementFrame
        stream: Text stream

    Returns:
        int: Frames written
    """
    count = 0
    for frame in frames:
        stream.write(json.dumps(frame_to_record(frame), separators=(",", ":"), allow_nan=False))
        stream.write("\n")
        count += 1
    return count
