"""
Frame I/O Tests
"""

import io
import json
import unittest
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.conservation import compute_velocity
from core.exceptions import DegenerateTimestamps, FormatError
from core.models import FrameKind
from core.synth_oracle import SkeletonWalk, StaticScanScenario, generate
from utils.frame_io import parse_frames, write_frames


def skeleton_line(t, n_joints=25):
    joints = [{"id": j, "p": [0.1 * j, 1.0, 0.0], "c": 0.9} for j in range(n_joints)]
    return json.dumps({"t": t, "joints": joints})


def scan_line(t, n_beams, a0=-47.5, da=0.385):
    return json.dumps({"t": t, "a0": a0, "da": da, "ranges": [4.0] * n_beams})


class TestJSONL(unittest.TestCase):
    """Test JSONL parsing"""

    def test_empty(self):
        """No input, no frames"""
        reader = parse_frames(io.StringIO(""))
        self.assertEqual(list(reader), [])
        self.assertEqual(reader.stats.total, 0)

    def test_skeleton(self):
        """All 25 joints with confidences"""
        frames = list(parse_frames([skeleton_line(0.0), skeleton_line(0.033)]))
        self.assertEqual(len(frames), 2)
        self.assertEqual(frames[0].kind, FrameKind.SKELETON)
        self.assertEqual(len(frames[0].payload.joints), 25)
        self.assertEqual(frames[1].payload.joints[3].position, (0.30000000000000004, 1.0, 0.0))
        self.assertEqual(frames[1].payload.joints[3].confidence, 0.9)

    def test_scan_beam_count(self):
        """715 beams fit 275 deg at 0.385 deg; 714 do not"""
        frames = list(parse_frames([scan_line(0.0, 715)], scan_fov=275.0))
        self.assertEqual(frames[0].payload.beam_count, 715)

        with self.assertRaises(FormatError):
            list(parse_frames([scan_line(0.0, 714)], scan_fov=275.0))

    def test_geometry_change(self):
        """Later scans must keep the first geometry"""
        with self.assertRaises(FormatError):
            list(parse_frames([scan_line(0.0, 10), scan_line(0.1, 11)]))

    def test_kind_switch(self):
        """A stream carries one payload kind"""
        with self.assertRaises(FormatError):
            list(parse_frames([skeleton_line(0.0), scan_line(0.1, 10)]))

    def test_malformed_records_skipped(self):
        """Bad records are counted and skipped, the stream continues"""
        lines = [
            skeleton_line(0.0),
            "{not json",
            json.dumps({"joints": []}),
            json.dumps({"t": 0.1, "joints": [{"id": 30, "p": [0, 0, 0]}]}),
            json.dumps({"t": 0.2, "joints": [{"id": 1, "p": [0, 0]}]}),
            json.dumps({"t": 0.3}),
            "",
            skeleton_line(0.4),
        ]
        with self.assertLogs("utils.frame_io", level="WARNING"):
            reader = parse_frames(lines)
            frames = list(reader)
        self.assertEqual([f.timestamp for f in frames], [0.0, 0.4])
        self.assertEqual(reader.stats.total, 7)
        self.assertEqual(reader.stats.parsed, 2)
        self.assertEqual(reader.stats.skipped, 5)
        self.assertEqual([line_no for line_no, _ in reader.stats.errors], [2, 3, 4, 5, 6])

    def test_timestamp_order(self):
        """Decreasing timestamps are skipped, repeated ones kept"""
        reader = parse_frames([skeleton_line(0.1), skeleton_line(0.1), skeleton_line(0.05), skeleton_line(0.2)])
        self.assertEqual([f.timestamp for f in reader], [0.1, 0.1, 0.2])
        self.assertEqual(reader.stats.skipped, 1)
        self.assertEqual(reader.stats.errors[0][0], 3)

    def test_repeated_timestamp_reaches_velocity(self):
        """Equal timestamps are valid records; speed over them is undefined"""
        frames = list(parse_frames([skeleton_line(0.0), skeleton_line(0.0), skeleton_line(0.1)]))
        self.assertEqual(len(frames), 3)
        with self.assertRaises(DegenerateTimestamps):
            compute_velocity(frames, 1)

    def test_null_and_max_range(self):
        """null and out-of-range returns become invalid beams"""
        line = json.dumps({"t": 0.0, "a0": 0.0, "da": 1.0, "ranges": [4.0, None, 60.0]})
        frame = next(iter(parse_frames([line], max_range=49.0)))
        np.testing.assert_array_equal(frame.payload.valid_mask, [True, False, False])

    def test_bytes_input(self):
        """Binary streams are decoded"""
        data = (scan_line(0.0, 3) + "\n" + scan_line(0.1, 3) + "\n").encode("utf-8")
        frames = list(parse_frames(io.BytesIO(data)))
        self.assertEqual(len(frames), 2)

    def test_generic(self):
        """Named channels"""
        frames = list(parse_frames([json.dumps({"t": 1.0, "channels": {"mass": 1.5}})]))
        self.assertEqual(frames[0].payload.channels["mass"], 1.5)

    def test_unknown_format(self):
        """Only jsonl and csv"""
        with self.assertRaises(FormatError):
            parse_frames([], fmt="xml")


class TestCSV(unittest.TestCase):
    """Test CSV scans"""

    def test_scan_rows(self):
        """Header t,a0,da,r0..; empty cells are dropouts"""
        text = "t,a0,da,r0,r1,r2\n0.0,0,0.5,4.0,,4.1\n0.1,0,0.5,4.0,4.0,4.0\n"
        frames = list(parse_frames(io.StringIO(text), fmt="csv"))
        self.assertEqual(len(frames), 2)
        np.testing.assert_array_equal(frames[0].payload.valid_mask, [True, False, True])

    def test_bad_header(self):
        """The header is mandatory"""
        with self.assertRaises(FormatError):
            list(parse_frames(io.StringIO("time,r0\n0,4\n"), fmt="csv"))

    def test_bad_rows_skipped(self):
        """Short and non-numeric rows are skipped"""
        text = "t,a0,da,r0,r1\n0.0,0,1,4,4\n0.1,0,1,4\n0.2,0,1,x,4\n0.3,0,1,4,4\n"
        reader = parse_frames(io.StringIO(text), fmt="csv")
        self.assertEqual([f.timestamp for f in reader], [0.0, 0.3])
        self.assertEqual(reader.stats.skipped, 2)


class TestWriteFrames(unittest.TestCase):
    """Test JSONL writing"""

    def test_scan_written_and_read(self):
        """Written scans parse back with the same ranges"""
        frames, _ = generate(StaticScanScenario(n_frames=3, dropout_rate=0.1, seed=2))
        buffer = io.StringIO()
        self.assertEqual(write_frames(frames, buffer), 3)

        buffer.seek(0)
        parsed = list(parse_frames(buffer, scan_fov=275.0))
        np.testing.assert_array_equal(parsed[2].payload.ranges, frames[2].payload.ranges)

    def test_skeleton_written(self):
        """One JSON object per line"""
        frames, _ = generate(SkeletonWalk(n_frames=2))
        buffer = io.StringIO()
        write_frames(frames, buffer)
        lines = buffer.getvalue().splitlines()
        self.assertEqual(len(lines), 2)
        self.assertEqual(len(json.loads(lines[1])["joints"]), 25)


if __name__ == '__main__':
    unittest.main()
