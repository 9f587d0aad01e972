"""Trajectory metrics: absolute pose error after rigid alignment, relative
pose error over fixed path-length segments."""

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import NoOverlap


@dataclass
class PoseTrajectory:
    """Timestamped poses; timestamps strictly increasing."""

    t: np.ndarray  # (N,)
    R: np.ndarray  # (N, 3, 3)
    p: np.ndarray  # (N, 3)

    def __post_init__(self):
        assert np.all(np.diff(self.t) > 0), "timestamps must strictly increase"

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class MetricReport:
    ate: float  # m, RMS after SE(3) alignment
    are: float  # deg, RMS after best single rotation alignment
    rte: dict  # distance (m) -> m RMS
    rre: dict  # distance (m) -> deg RMS
    n_poses: int
    n_segments: dict  # distance -> count


def associate(est: PoseTrajectory, truth: PoseTrajectory, max_dt: float = 0.01):
    """Nearest-timestamp association within max_dt; returns index pairs."""
    idx = np.searchsorted(truth.t, est.t)
    pairs = []
    for i, j in enumerate(idx):
        best, best_dt = -1, max_dt
        for cand in (j - 1, j):
            if 0 <= cand < len(truth) and abs(truth.t[cand] - est.t[i]) <= best_dt:
                best, best_dt = cand, abs(truth.t[cand] - est.t[i])
        if best >= 0:
            pairs.append((i, best))
    return pairs


def umeyama_alignment(source: np.ndarray, target: np.ndarray):
    """Rigid SE(3) alignment (no scale) minimizing |R s + t - target|^2."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    H = (target - mu_t).T @ (source - mu_s)
    R = so3.nearest_rotation(H)
    t = mu_t - R @ mu_s
    return R, t


def compute_ate_are(est: PoseTrajectory, truth: PoseTrajectory, max_dt: float = 0.01):
    """(ATE m, ARE deg): positions aligned by a single SE(3), rotations by
    the best single rotation (chordal mean)."""
    pairs = associate(est, truth, max_dt)
    if len(pairs) < 2:
        raise NoOverlap(f"only {len(pairs)} associated poses")
    ei = np.array([i for i, _ in pairs])
    ti = np.array([j for _, j in pairs])
    R_a, t_a = umeyama_alignment(est.p[ei], truth.p[ti])
    resid = est.p[ei] @ R_a.T + t_a - truth.p[ti]
    ate = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))

    M = np.zeros((3, 3))
    for i, j in pairs:
        M += truth.R[j] @ est.R[i].T
    Q = so3.nearest_rotation(M)
    angles = [so3.rotation_angle(Q @ est.R[i] @ truth.R[j].T) for i, j in pairs]
    are = float(np.degrees(np.sqrt(np.mean(np.square(angles)))))
    return ate, are


def compute_rte_rre(
    est: PoseTrajectory,
    truth: PoseTrajectory,
    distances=(25.0, 100.0),
    max_dt: float = 0.01,
):
    """Per-distance (RRE deg, RTE m): for every start pose, compare the
    relative motion to the truth pose one segment length of accumulated
    truth path later; RMS over all segments."""
    pairs = associate(est, truth, max_dt)
    if len(pairs) < 2:
        raise NoOverlap(f"only {len(pairs)} associated poses")
    ei = np.array([i for i, _ in pairs])
    ti = np.array([j for _, j in pairs])
    p_t = truth.p[ti]
    path = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p_t, axis=0), axis=1))])

    out_rte, out_rre, counts = {}, {}, {}
    for d in distances:
        ends = np.searchsorted(path, path + d)
        errs_t, errs_r = [], []
        for a in range(len(pairs)):
            b = ends[a]
            if b >= len(pairs):
                break
            dR_e = est.R[ei[a]].T @ est.R[ei[b]]
            dp_e = est.R[ei[a]].T @ (est.p[ei[b]] - est.p[ei[a]])
            dR_t = truth.R[ti[a]].T @ truth.R[ti[b]]
            dp_t = truth.R[ti[a]].T @ (truth.p[ti[b]] - truth.p[ti[a]])
            E_R = dR_t.T @ dR_e
            E_p = dR_t.T @ (dp_e - dp_t)
            errs_r.append(so3.rotation_angle(E_R))
            errs_t.append(np.linalg.norm(E_p))
        if not errs_t:
            raise NoOverlap(f"trajectory shorter than segment length {d} m")
        out_rte[d] = float(np.sqrt(np.mean(np.square(errs_t))))
        out_rre[d] = float(np.degrees(np.sqrt(np.mean(np.square(errs_r)))))
        counts[d] = len(errs_t)
    return out_rre, out_rte, counts


def evaluate_run(est: PoseTrajectory, truth: PoseTrajectory, distances=(25.0, 100.0)) -> MetricReport:
    """MetricReport over whatever segment lengths the path supports;
    distances longer than the run are omitted rather than fatal."""
    ate, are = compute_ate_are(est, truth)
    rre, rte, counts = {}, {}, {}
    for d in distances:
        try:
            rre_d, rte_d, counts_d = compute_rte_rre(est, truth, (d,))
        except NoOverlap:
            continue
        rre.update(rre_d)
        rte.update(rte_d)
        counts.update(counts_d)
    return MetricReport(
        ate=ate,
        are=are,
        rte=rte,
        rre=rre,
        n_poses=len(associate(est, truth)),
        n_segments=counts,
    )


# --- trajectory files --------------------------------------------------------------

def save_trajectory_csv(traj: PoseTrajectory, path: str) -> None:
    """t, x, y, z, qw, qx, qy, qz with full float precision."""
    from scipy.spatial.transform import Rotation

    quat = Rotation.from_matrix(traj.R).as_quat()  # x, y, z, w
    rows = np.column_stack([traj.t, traj.p, quat[:, 3], quat[:, 0], quat[:, 1], quat[:, 2]])
    np.savetxt(path, rows, delimiter=",", header="t,x,y,z,qw,qx,qy,qz", comments="", fmt="%.17g")


def load_trajectory_csv(path: str) -> PoseTrajectory:
    from scipy.spatial.transform import Rotation

    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    R = Rotation.from_quat(rows[:, [5, 6, 7, 4]]).as_matrix()
    return PoseTrajectory(rows[:, 0], R, rows[:, 1:4])


# --- report files ----------------------------------------------------------------

def emit_report_csv(reports: dict) -> str:
    """reports: name -> MetricReport. Full-precision CSV that parses back
    to identical values."""
    distances = sorted({d for r in reports.values() for d in r.rte})
    header = ["name", "ate_m", "are_deg", "n_poses"]
    for d in distances:
        header += [f"rte_{d:g}m", f"rre_{d:g}m", f"segments_{d:g}m"]
    lines = [",".join(header)]
    for name, r in reports.items():
        row = [name, f"{r.ate:.17g}", f"{r.are:.17g}", str(r.n_poses)]
        for d in distances:
            if d in r.rte:
                row += [f"{r.rte[d]:.17g}", f"{r.rre[d]:.17g}", str(r.n_segments[d])]
            else:
                row += ["nan", "nan", "0"]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> dict:
    lines = [l for l in text.strip().split("\n") if l]
    header = lines[0].split(",")
    distances = []
    for col in header:
        if col.startswith("rte_"):
            distances.append(float(col[4:-1]))
    out = {}
    for line in lines[1:]:
        fields = line.split(",")
        rte, rre, counts = {}, {}, {}
        for k, d in enumerate(distances):
            base = 4 + 3 * k
            if fields[base] != "nan":
                rte[d] = float(fields[base])
                rre[d] = float(fields[base + 1])
                counts[d] = int(fields[base + 2])
        out[fields[0]] = MetricReport(
            ate=float(fields[1]),
            are=float(fields[2]),
            rte=rte,
            rre=rre,
            n_poses=int(fields[3]),
            n_segments=counts,
        )
    return out
