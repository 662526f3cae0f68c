"""
Validators Module
Input validation functions
"""

import re
from pathlib import Path

from core.models import BODY25_JOINTS

PAIR_PATTERN = re.compile(r"^\s*(\d+)\s*-\s*(\d+)\s*$")


class Validators:
    """
    Validation utility class
    """

    @staticmethod
    def validate_window_size(window_size):
        """
        Validate window size

        Args:
            window_size: Frames per tumbling window

        Returns:
            tuple: (is_valid, message)
        """
        try:
            window_size = int(window_size)
        except (ValueError, TypeError):
            return False, "Invalid window size value"

        if window_size < 2:
            return False, f"Window size must be >= 2 (got {window_size})"

        return True, f"Window size valid ({window_size})"

    @staticmethod
    def validate_count(value, name, minimum=1):
        """
        Validate an integer count such as a resample or permutation count

        Returns:
            tuple: (is_valid, message)
        """
        try:
            value = int(value)
        except (ValueError, TypeError):
            return False, f"Invalid {name} value"

        if value < minimum:
            return False, f"{name} must be >= {minimum} (got {value})"

        return True, f"{name} valid ({value})"

    @staticmethod
    def validate_open_fraction(value, name):
        """
        Validate a level strictly between 0 and 1 (confidence, alpha)

        Returns:
            tuple: (is_valid, message)
        """
        try:
            value = float(value)
        except (ValueError, TypeError):
            return False, f"Invalid {name} value"

        if not 0.0 < value < 1.0:
            return False, f"{name} must be between 0 and 1 exclusive (got {value})"

        return True, f"{name} valid ({value})"

    @staticmethod
    def validate_positive(value, name):
        """
        Validate a strictly positive number

        Returns:
            tuple: (is_valid, message)
        """
        try:
            value = float(value)
        except (ValueError, TypeError):
            return False, f"Invalid {name} value"

        if not value > 0:
            return False, f"{name} must be > 0 (got {value})"

        return True, f"{name} valid ({value})"

    @staticmethod
    def validate_seed(seed):
        """Seeds feed SeedSequence and must be non-negative integers"""
        try:
            seed = int(seed)
        except (ValueError, TypeError):
            return False, "Invalid seed value"

        if seed < 0:
            return False, f"Seed must be >= 0 (got {seed})"

        return True, f"Seed valid ({seed})"

    @staticmethod
    def validate_choice(value, choices, name):
        """
        Validate an enumerated option

        Returns:
            tuple: (is_valid, message)
        """
        if value not in choices:
            return False, f"{name} must be one of {', '.join(choices)} (got '{value}')"
        return True, f"{name} valid ({value})"

    @staticmethod
    def validate_pair(text):
        """
        Validate a joint pair written as "j-k"

        Returns:
            tuple: (is_valid, message)
        """
        match = PAIR_PATTERN.match(text or "")
        if not match:
            return False, f"Invalid joint pair '{text}' (expected e.g. 1-8)"

        j, k = int(match.group(1)), int(match.group(2))
        if j >= BODY25_JOINTS or k >= BODY25_JOINTS:
            return False, f"Joint pair '{text}' outside Body25 range 0..{BODY25_JOINTS - 1}"

        if j == k:
            return False, f"Joint pair '{text}' joins a joint to itself"

        return True, "Joint pair valid"

    @staticmethod
    def validate_vector(text, length=3):
        """
        Validate a comma-separated numeric vector

        Returns:
            tuple: (is_valid, message)
        """
        parts = [p for p in (text or "").split(",") if p.strip()]
        if len(parts) != length:
            return False, f"Expected {length} comma-separated numbers (got '{text}')"

        try:
            [float(p) for p in parts]
        except ValueError:
            return False, f"Non-numeric entry in '{text}'"

        return True, "Vector valid"

    @staticmethod
    def validate_file_path(file_path, must_exist=True):
        """
        Validate file path

        Args:
            file_path: Path to validate
            must_exist: Whether file must exist (default: True)

        Returns:
            tuple: (is_valid, message)
        """
        try:
            path = Path(file_path)

            if must_exist and not path.exists():
                return False, f"Path does not exist: {file_path}"

            if must_exist and not path.is_file():
                return False, f"Path is not a file: {file_path}"

            if not path.parent.exists():
                return False, f"Parent directory does not exist: {path.parent}"

            return True, "Path valid"

        except Exception as e:
            return False, f"Invalid path: {str(e)}"
