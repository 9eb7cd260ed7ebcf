"""Simulated human-robot shared workcell.

A robot arm builds block towers in a tabletop workspace while a human
steers it live: claiming blocks forces an online replan, eye blinks halt
the arm, and the human's affective state feeds back into the robot's
learning loop as a shaping reward. All hardware (arm, EEG headset,
affect SDK) is replaced by deterministic simulators so the whole system
runs on a desk with zero external services.
"""

__version__ = "0.1.0"
