"""Python entry points of the contouring planner."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..dynamics import VehicleLimits, VehicleState
from ..geometry import ReferencePath, errors_at
from . import sqp
from .types import DiscConfig, MpccProblem, MpccSolution, MpccWeights, ObstacleEllipse, SolveStatus

KKT_TOL = 1e-6
EPS_CON = 1e-4
# solver targets sqrt(margin) >= 1 + buffer so converged solutions are strictly outside
COLLISION_BUFFER = 1e-3

_STATUS = {sqp.ST_FEASIBLE: SolveStatus.FEASIBLE,
           sqp.ST_INFEASIBLE: SolveStatus.INFEASIBLE,
           sqp.ST_MAXITER: SolveStatus.MAX_ITER}


def stage_cost(s: VehicleState, u, lam: float, v_ref: float, weights: MpccWeights,
               path: ReferencePath) -> float:
    """Contouring stage cost; ``u`` is a ControlInput or None for the terminal stage."""
    e_c, e_l = errors_at(path, lam, (s.x, s.y))
    cost = weights.q_c * e_c**2 + weights.q_l * e_l**2 + weights.q_v * (v_ref - s.v) ** 2
    if u is not None:
        cost += weights.q_u * u.a**2 + weights.q_delta * u.delta**2
    return float(cost)


def disc_center(s: VehicleState, offset: float) -> np.ndarray:
    return np.array([s.x + offset * math.cos(s.psi), s.y + offset * math.sin(s.psi)])


def collision_margin(s: VehicleState, disc: int, obstacle: ObstacleEllipse, k: int,
                     discs: DiscConfig = DiscConfig()) -> float:
    """Ellipse quadratic form at the center of ego disc ``disc``; > 1 is clear."""
    p = disc_center(s, discs.offsets[disc])
    o = obstacle.centers[k]
    return float(sqp.ellipse_margin(p[0], p[1], o[0], o[1], obstacle.phi, obstacle.alpha, obstacle.beta))


def _obstacle_arrays(problem: MpccProblem):
    H = problem.horizon
    obs = problem.obstacles if problem.collision else ()
    n = len(obs)
    centers = np.zeros((n, H + 1, 2))
    phi = np.zeros(n)
    a = np.ones(n)
    b = np.ones(n)
    for i, ob in enumerate(obs):
        centers[i] = ob.centers
        phi[i], a[i], b[i] = ob.phi, ob.alpha, ob.beta
    return centers, phi, a, b


def shift_controls(controls: np.ndarray) -> np.ndarray:
    """Drop the applied first control and repeat the last one."""
    c = np.asarray(controls, dtype=float)
    return np.vstack([c[1:], c[-1:]])


def solve(problem: MpccProblem, warm_start=None, log_path=None) -> MpccSolution:
    """Solve the horizon NLP by SQP.

    ``warm_start`` may be a previous :class:`MpccSolution` (its controls are
    used as given, callers shift them) or an (H, 2) control array. If
    ``log_path`` is set, one JSON record per iterate is appended there.
    """
    H = problem.horizon
    if warm_start is None:
        u = np.zeros(2 * H)
    else:
        ctrl = warm_start.controls if isinstance(warm_start, MpccSolution) else warm_start
        ctrl = np.asarray(ctrl, dtype=float)
        if ctrl.shape != (H, 2):
            raise ValueError("warm start must have shape (H, 2)")
        u = ctrl.reshape(-1).copy()
    lim = problem.limits
    path = problem.path
    centers, phi, a, b = _obstacle_arrays(problem)
    S = np.empty((H + 1, 4))
    L = np.empty(H + 1)
    info = np.zeros(6)
    log = np.full((problem.max_iter + 1, 4), np.nan)
    code = sqp.sqp_core(
        problem.state.as_array(), float(problem.lam0), u, float(problem.v_ref),
        problem.weights.as_array(), path.knots, path.cx, path.cy,
        float(problem.w_left), float(problem.w_right),
        lim.a_lo, lim.a_hi, lim.delta_max, lim.v_max, lim.l_r, lim.l_f, float(problem.dt),
        centers, phi, a, b, np.asarray(problem.discs.offsets, dtype=float),
        bool(problem.collision and len(problem.obstacles) > 0),
        int(problem.max_iter), KKT_TOL, EPS_CON, COLLISION_BUFFER,
        S, L, info, log)
    n_it = int(info[sqp.I_ITER])
    log = log[: n_it + 1]
    if log_path is not None:
        with open(log_path, "a") as fh:
            for row in log:
                fh.write(json.dumps({"iterate": int(row[0]), "merit": _num(row[1]),
                                     "kkt": _num(row[2]), "violation": _num(row[3])}) + "\n")
    return MpccSolution(
        status=_STATUS[code],
        controls=u.reshape(H, 2).copy(),
        states=S,
        progress=L,
        cost=float(info[sqp.I_COST]),
        iterations=n_it,
        kkt_residual=float(info[sqp.I_KKT]),
        max_violation=float(info[sqp.I_VIOL]),
        log=log,
    )


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def problem_to_dict(problem: MpccProblem) -> dict:
    s = problem.state
    return {
        "state": [s.x, s.y, s.psi, s.v],
        "lam0": problem.lam0,
        "v_ref": problem.v_ref,
        "waypoints": problem.path.waypoints.tolist(),
        "weights": problem.weights.as_array().tolist(),
        "w_left": problem.w_left,
        "w_right": problem.w_right,
        "obstacles": [{"centers": ob.centers.tolist(), "phi": ob.phi,
                       "alpha": ob.alpha, "beta": ob.beta} for ob in problem.obstacles],
        "limits": problem.limits.as_array().tolist(),
        "horizon": problem.horizon,
        "dt": problem.dt,
        "discs": {"offsets": list(problem.discs.offsets), "radius": problem.discs.radius},
        "collision": problem.collision,
        "max_iter": problem.max_iter,
    }


def problem_from_dict(d: dict) -> MpccProblem:
    return MpccProblem(
        state=VehicleState(*map(float, d["state"])),
        lam0=float(d["lam0"]),
        v_ref=float(d["v_ref"]),
        path=ReferencePath(d["waypoints"]),
        weights=MpccWeights(*d["weights"]),
        w_left=float(d["w_left"]),
        w_right=float(d["w_right"]),
        obstacles=tuple(ObstacleEllipse(np.array(o["centers"]), o["phi"], o["alpha"], o["beta"])
                        for o in d["obstacles"]),
        limits=VehicleLimits(*d["limits"]),
        horizon=int(d["horizon"]),
        dt=float(d["dt"]),
        discs=DiscConfig(tuple(d["discs"]["offsets"]), float(d["discs"]["radius"])),
        collision=bool(d["collision"]),
        max_iter=int(d["max_iter"]),
    )


def save_problem(problem: MpccProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=1))


def load_problem(path) -> MpccProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))
