"""Closed-form planar trajectories for the synthetic robot.

A trajectory is a sequence of constant-speed, constant-yaw-rate segments
(straights and arcs), so pose, velocity, angular rate and specific force
all have exact analytic values at any time. Attitude is yaw-only, matching
a wheeled platform on flat ground.
"""

from dataclasses import dataclass

import numpy as np

from .. import so3


@dataclass(frozen=True)
class Segment:
    duration: float
    speed: float
    yaw_rate: float


class Trajectory:
    def __init__(self, segments: list[Segment], height: float = 1.2, t0: float = 0.0):
        assert segments, "need at least one segment"
        self.segments = segments
        self.height = height
        self.t0 = t0
        # precompute segment-start time, position and heading
        self._starts = []
        t, x, y, psi = t0, 0.0, 0.0, 0.0
        for seg in segments:
            self._starts.append((t, x, y, psi))
            if abs(seg.yaw_rate) < 1e-12:
                x += seg.speed * seg.duration * np.cos(psi)
                y += seg.speed * seg.duration * np.sin(psi)
            else:
                r = seg.speed / seg.yaw_rate
                psi1 = psi + seg.yaw_rate * seg.duration
                x += r * (np.sin(psi1) - np.sin(psi))
                y += r * (-np.cos(psi1) + np.cos(psi))
                psi = psi1
            t += seg.duration
        self.t_end = t

    @property
    def duration(self) -> float:
        return self.t_end - self.t0

    def _locate(self, t: float):
        tau = np.clip(t, self.t0, self.t_end)
        for seg, (ts, x, y, psi) in zip(reversed(self.segments), reversed(self._starts)):
            if tau >= ts - 1e-12:
                return seg, ts, x, y, psi
        seg = self.segments[0]
        ts, x, y, psi = self._starts[0]
        return seg, ts, x, y, psi

    def state(self, t: float):
        """(position, heading, speed, yaw_rate) at time t."""
        seg, ts, x, y, psi = self._locate(t)
        tau = np.clip(t, self.t0, self.t_end) - ts
        if abs(seg.yaw_rate) < 1e-12:
            px = x + seg.speed * tau * np.cos(psi)
            py = y + seg.speed * tau * np.sin(psi)
            heading = psi
        else:
            r = seg.speed / seg.yaw_rate
            heading = psi + seg.yaw_rate * tau
            px = x + r * (np.sin(heading) - np.sin(psi))
            py = y + r * (-np.cos(heading) + np.cos(psi))
        return np.array([px, py, self.height]), heading, seg.speed, seg.yaw_rate

    def state_batch(self, times: np.ndarray):
        """Vectorized state: (positions (N, 3), headings, speeds, yaw_rates)."""
        times = np.clip(np.asarray(times, dtype=float), self.t0, self.t_end)
        seg_t0 = np.array([s[0] for s in self._starts])
        seg_idx = np.clip(np.searchsorted(seg_t0, times, side="right") - 1, 0, len(self.segments) - 1)
        tau = times - seg_t0[seg_idx]
        speeds = np.array([s.speed for s in self.segments])[seg_idx]
        rates = np.array([s.yaw_rate for s in self.segments])[seg_idx]
        x0 = np.array([s[1] for s in self._starts])[seg_idx]
        y0 = np.array([s[2] for s in self._starts])[seg_idx]
        psi0 = np.array([s[3] for s in self._starts])[seg_idx]

        straight = np.abs(rates) < 1e-12
        heading = psi0 + rates * tau
        r = speeds / np.where(straight, 1.0, rates)
        px = np.where(
            straight,
            x0 + speeds * tau * np.cos(psi0),
            x0 + r * (np.sin(heading) - np.sin(psi0)),
        )
        py = np.where(
            straight,
            y0 + speeds * tau * np.sin(psi0),
            y0 + r * (-np.cos(heading) + np.cos(psi0)),
        )
        pos = np.column_stack([px, py, np.full(len(times), self.height)])
        return pos, heading, speeds, rates

    def pose(self, t: float):
        """(R body-to-world, position) at time t."""
        p, heading, _, _ = self.state(t)
        return so3.rot_z(heading), p

    def velocity(self, t: float) -> np.ndarray:
        _, heading, speed, _ = self.state(t)
        return speed * np.array([np.cos(heading), np.sin(heading), 0.0])

    def angular_rate_body(self, t: float) -> np.ndarray:
        _, _, _, yaw_rate = self.state(t)
        return np.array([0.0, 0.0, yaw_rate])

    def specific_force_body(self, t: float, gravity_w: np.ndarray) -> np.ndarray:
        """Accelerometer reading: f = R^T (a_w - g_w)."""
        _, heading, speed, yaw_rate = self.state(t)
        a_w = speed * yaw_rate * np.array([-np.sin(heading), np.cos(heading), 0.0])
        R, _ = self.pose(t)
        return R.T @ (a_w - np.asarray(gravity_w))


def make_trajectory(
    profile: str,
    duration: float,
    speed: float = 1.5,
    turn_radius: float = 10.0,
    height: float = 1.2,
) -> Trajectory:
    """Bundled motion profiles: 'straight', 'circle', and 's_curve' (a
    corridor run with alternating left/right turning maneuvers)."""
    if duration <= 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    rate = speed / turn_radius
    if profile == "straight":
        segments = [Segment(duration, speed, 0.0)]
    elif profile == "circle":
        segments = [Segment(duration, speed, rate)]
    elif profile == "s_curve":
        # forward run with two S-shaped lane-change maneuvers: each arc
        # sweeps a fixed angle and is immediately countered, so the path
        # stays inside a corridor regardless of total duration
        sweep = 0.45  # rad per arc
        arc_time = min(sweep / rate, duration * 0.1)
        straight_time = (duration - 4.0 * arc_time) / 3.0
        segments = [
            Segment(straight_time, speed, 0.0),
            Segment(arc_time, speed, rate),
            Segment(arc_time, speed, -rate),
            Segment(straight_time, speed, 0.0),
            Segment(arc_time, speed, -rate),
            Segment(arc_time, speed, rate),
            Segment(straight_time, speed, 0.0),
        ]
    else:
        raise ValueError(f"unknown trajectory profile {profile!r}")
    return Trajectory(segments, height=height)
