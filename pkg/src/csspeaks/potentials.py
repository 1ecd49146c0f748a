"""Built-in potential families satisfying the positivity/Hoelder assumptions.

Three families cover the test matrix: a constant (degenerate: no strict
maximum, used by guard tests and interaction fits), a radial Lipschitz bump
with strict maximum at x0, and an anisotropic bump for the non-radial case.
"""

from __future__ import annotations

import numpy as np

from .energy import Potential


def constant_potential(value: float, x0=(0.0, 0.0), delta: float = 2.0) -> Potential:
    if not value > 0:
        raise ValueError("constant potential must be positive")

    def ev(x1, x2):
        return np.full_like(np.asarray(x1, dtype=float), value)

    return Potential(
        evaluator=ev,
        x0=np.asarray(x0, dtype=float),
        delta=delta,
        holder_L=1e-12,
        holder_theta=1.0,
        v_inf=value,
        name=f"constant({value})",
    )


def radial_bump_potential(base: float, height: float, x0=(0.0, 0.0),
                          delta: float = 2.0) -> Potential:
    """V = base + height / (1 + |x - x0|^2): Lipschitz, strict max at x0."""
    if not (base > 0 and height > 0):
        raise ValueError("radial bump needs base > 0 and height > 0")
    x0 = np.asarray(x0, dtype=float)

    def ev(x1, x2):
        r2 = (x1 - x0[0]) ** 2 + (x2 - x0[1]) ** 2
        return base + height / (1.0 + r2)

    # max of |grad V| = height * max 2r/(1+r^2)^2 attained at r = 1/sqrt(3)
    lip = height * 2.0 * (1.0 / np.sqrt(3.0)) / (1.0 + 1.0 / 3.0) ** 2
    return Potential(
        evaluator=ev,
        x0=x0,
        delta=delta,
        holder_L=lip * 1.0000001,
        holder_theta=1.0,
        v_inf=base,
        name=f"radial_bump({base},{height})",
    )


def anisotropic_bump_potential(base: float, height: float, q1: float, q2: float,
                               x0=(0.0, 0.0), delta: float = 2.0) -> Potential:
    """V = base + height / (1 + q1 (x1-x0_1)^2 + q2 (x2-x0_2)^2)."""
    if not (base > 0 and height > 0 and q1 > 0 and q2 > 0):
        raise ValueError("anisotropic bump needs positive parameters")
    x0 = np.asarray(x0, dtype=float)

    def ev(x1, x2):
        q = q1 * (x1 - x0[0]) ** 2 + q2 * (x2 - x0[1]) ** 2
        return base + height / (1.0 + q)

    qm = max(q1, q2)
    lip = height * np.sqrt(qm) * 2.0 * (1.0 / np.sqrt(3.0)) / (4.0 / 3.0) ** 2
    return Potential(
        evaluator=ev,
        x0=x0,
        delta=delta,
        holder_L=lip * 1.0000001,
        holder_theta=1.0,
        v_inf=base,
        name=f"aniso_bump({base},{height},{q1},{q2})",
    )


FAMILIES = {
    "constant": constant_potential,
    "radial_bump": radial_bump_potential,
    "anisotropic_bump": anisotropic_bump_potential,
}


def from_config(cfg: dict) -> Potential:
    """Instantiate a potential from a config mapping with a `family` key."""
    cfg = dict(cfg)
    family = cfg.pop("family")
    if family not in FAMILIES:
        raise ValueError(f"unknown potential family {family!r}")
    return FAMILIES[family](**cfg)
