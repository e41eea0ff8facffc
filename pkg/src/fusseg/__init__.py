"""Segmentation of functional-ultrasound Power-Doppler stacks into
downward-flow, upward-flow and background compartments."""

__version__ = "0.1.0"

BACKGROUND, DOWNWARD, UPWARD = 0, 1, 2
CLASS_NAMES = ("b", "d", "u")
