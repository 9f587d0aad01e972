"""LiDAR-inertial odometry with adaptively segmented cylinder landmarks,
plus a synthetic forest simulator and an evaluation CLI."""

__version__ = "0.1.0"
