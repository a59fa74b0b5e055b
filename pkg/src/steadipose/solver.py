"""Levenberg-Marquardt solve of the per-frame virtual pose."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import InvalidArgumentError, SolverError
from .geometry import CameraPose, quat_exp, quat_mul
from .objective import N_PARAMS, residuals, residuals_and_jacobian


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 10
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.5
    step_tolerance: float = 1e-8
    energy_tolerance: float = 1e-10
    optimize_rotation: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be at least 1")
        if not (self.initial_damping > 0 and self.damping_up > 1 and 0 < self.damping_down < 1
                and self.step_tolerance > 0 and self.energy_tolerance > 0):
            raise InvalidArgumentError(f"invalid solver settings {self!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    accepted: int = 0
    initial_energy: float = 0.0
    final_energy: float = 0.0
    converged: bool = False
    step_norms: List[float] = field(default_factory=list)


def solve_normal_equations(jtj, jtr, damping, max_escalations=5):
    """Solve ``(JtJ + damping * diag(JtJ)) delta = -Jtr``.

    A Cholesky factorization tests positive definiteness; a failed one raises the damping tenfold (at least to 1e-9) up to
    ``max_escalations`` times before giving up.
    """
    jtj = np.asarray(jtj, dtype=float)
    jtr = np.asarray(jtr, dtype=float)
    diag = np.diag(jtj).copy()
    # keep Marquardt scaling meaningful for parameters with no curvature
    floor = 1e-12 * max(1.0, float(diag.max(initial=0.0)))
    diag = np.maximum(diag, floor)
    for _ in range(max_escalations + 1):
        a = jtj + damping * np.diag(diag)
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            damping = max(damping * 10.0, 1e-9)
            continue
        return np.linalg.solve(a, -jtr)
    raise SolverError("normal equations are not positive definite")


def retract(pose, step):
    """Apply a 5-vector increment: left rotation exponential plus offset shift."""
    rot = quat_mul(quat_exp(step[:3]), pose.rotation)
    return CameraPose(rot, pose.offset + step[3:5])


def solve(initial, ctx, w, settings=SolverSettings()):
    """Minimize the frame objective from ``initial``; returns ``(pose, SolveReport)``.

    Every accepted step strictly lowers the energy, so the result is never worse
    than the starting pose.
    """
    pose = initial
    try:
        r, jac = residuals_and_jacobian(pose, ctx, w)
    except (ArithmeticError, ValueError) as exc:
        raise SolverError(f"objective evaluation failed at the initial pose: {exc}", last_pose=pose) from exc
    energy = float(r @ r)
    report = SolveReport(initial_energy=energy, final_energy=energy)
    damping = settings.initial_damping
    free = np.arange(N_PARAMS) if settings.optimize_rotation else np.array([3, 4])

    for it in range(1, settings.max_iterations + 1):
        report.iterations = it
        jf = jac[:, free]
        jtj = jf.T @ jf
        jtr = jf.T @ r
        if energy == 0.0 or not np.any(jtr):
            report.converged = True
            break
        accepted = False
        while not accepted:
            step = np.zeros(N_PARAMS)
            step[free] = solve_normal_equations(jtj, jtr, damping)
            candidate = retract(pose, step)
            try:
                r_new = residuals(candidate, ctx, w)
                e_new = float(r_new @ r_new)
            except (ArithmeticError, ValueError):
                e_new = np.inf
            if e_new < energy:
                accepted = True
                break
            damping *= settings.damping_up
            if damping > 1e12:
                break
        step_norm = float(np.max(np.abs(step)))
        report.step_norms.append(step_norm)
        if not accepted:
            report.converged = True
            break
        decrease = (energy - e_new) / energy
        pose, energy = candidate, e_new
        report.accepted += 1
        damping = max(damping * settings.damping_down, 1e-15)
        if step_norm < settings.step_tolerance or decrease < settings.energy_tolerance:
            report.converged = True
            break
        try:
            r, jac = residuals_and_jacobian(pose, ctx, w)
        except (ArithmeticError, ValueError) as exc:
            raise SolverError(f"Jacobian evaluation failed: {exc}", last_pose=pose) from exc

    report.final_energy = energy
    return pose, report
