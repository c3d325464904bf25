"""Cruise-control benchmark: dynamics, safety-game controller synthesis, handcrafted predicate.

Two cars on one lane.  Each step both pick an acceleration from
``{a_min, 0, a_max}`` for one time unit ``t1``; the ego car must keep the
relative distance at least ``d_safe`` against any behaviour of the front car.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ControllerDataset, LabelSet


class CruiseError(ValueError):
    pass


@dataclass(frozen=True)
class CruiseParams:
    v_min: int = -6
    v_max: int = 8
    d_max: int = 40
    d_safe: int = 5
    t1: int = 1
    a_min: int = -2
    a_max: int = 2
    max_states: int = 5_000_000

    def __post_init__(self) -> None:
        if self.v_min >= self.v_max:
            raise CruiseError("v_min must be below v_max")
        if self.v_min % 2 or self.v_max % 2:
            raise CruiseError("velocity bounds must be even")
        if self.d_safe < 0:
            raise CruiseError("d_safe must be non-negative")
        if self.d_max <= self.d_safe:
            raise CruiseError("d_max must exceed d_safe")
        if (self.a_min, self.a_max, self.t1) != (-2, 2, 1):
            raise CruiseError("the model is fixed to accelerations {-2, 0, 2} and t1 = 1")

    @property
    def accelerations(self) -> tuple[int, int, int]:
        return (self.a_min, 0, self.a_max)

    @property
    def velocities(self) -> np.ndarray:
        return np.arange(self.v_min, self.v_max + 1, 2)


@dataclass(frozen=True, order=True)
class CruiseState:
    v_e: int
    v_f: int
    d_r: int


def available(v: int, a: int, p: CruiseParams) -> bool:
    return p.v_min <= v + a * p.t1 <= p.v_max


def step_dynamics(s: CruiseState, a_e: int, a_f: int, p: CruiseParams) -> CruiseState:
    """One step of the kinematics; the new distance saturates at the sensor range ``d_max``."""
    if a_e not in p.accelerations or not available(s.v_e, a_e, p):
        raise CruiseError(f"ego action {a_e} unavailable at v_e={s.v_e}")
    if a_f not in p.accelerations or not available(s.v_f, a_f, p):
        raise CruiseError(f"front action {a_f} unavailable at v_f={s.v_f}")
    t = p.t1
    d = s.d_r + (s.v_f - s.v_e) * t + (a_f - a_e) * t * t // 2
    return CruiseState(s.v_e + a_e * t, s.v_f + a_f * t, min(d, p.d_max))


def synthesize_controller(p: CruiseParams) -> ControllerDataset:
    """Maximally permissive safety controller as a greatest fixpoint over the state grid.

    ``W_0`` holds states with ``d_r >= d_safe``; a state stays winning while
    some available ego action keeps every available front response inside
    the current winning set.  States are emitted in lexicographic order of
    ``(v_e, v_f, d_r)``.
    """
    vs = p.velocities
    nv = vs.size
    nd = p.d_max + 1
    if nv * nv * nd > p.max_states:
        raise CruiseError(f"{nv * nv * nd} grid states exceed the cap of {p.max_states}")
    acc = np.array(p.accelerations)
    ve, vf, d = np.meshgrid(vs, vs, np.arange(nd), indexing="ij")

    # succ[ae, af] -> (index triple, valid) for every grid state
    succ = {}
    for i, ae in enumerate(acc):
        for j, af in enumerate(acc):
            ve2 = ve + ae
            vf2 = vf + af
            d2 = np.minimum(d + (vf - ve) + (af - ae) // 2, p.d_max)
            ok_e = (ve2 >= p.v_min) & (ve2 <= p.v_max)
            ok_f = (vf2 >= p.v_min) & (vf2 <= p.v_max)
            ie = np.clip((ve2 - p.v_min) // 2, 0, nv - 1)
            jf = np.clip((vf2 - p.v_min) // 2, 0, nv - 1)
            dd = np.clip(d2, 0, nd - 1)
            succ[i, j] = (ok_e, ok_f, ie, jf, dd, d2 >= p.d_safe)

    win = d >= p.d_safe
    while True:
        safe_action = np.zeros((len(acc),) + win.shape, dtype=bool)
        for i in range(len(acc)):
            ok_e = succ[i, 0][0]
            good = ok_e.copy()
            for j in range(len(acc)):
                _, ok_f, ie, jf, dd, above = succ[i, j]
                stays = above & win[ie, jf, dd]
                good &= ~ok_f | stays
            safe_action[i] = good
        new_win = win & safe_action.any(axis=0)
        if np.array_equal(new_win, win):
            break
        win = new_win
    if not win.any():
        raise CruiseError("empty winning region")

    idx = np.argwhere(win)  # lexicographic in (v_e, v_f, d_r)
    X = np.column_stack([vs[idx[:, 0]], vs[idx[:, 1]], idx[:, 2]]).astype(np.float64)
    table: dict[LabelSet, int] = {}
    labels = []
    for a, b, c in idx:
        acts = tuple(int(k) for k in np.flatnonzero(safe_action[:, a, b, c]))
        labels.append(table.setdefault(LabelSet(acts), len(table)))
    names = [str(int(a)) for a in acc]
    return ControllerDataset(["v_e", "v_f", "d_r"], X, labels, list(table), names)


def handcrafted_areas(v_e, v_f, p: CruiseParams) -> tuple:
    """The four areas between the velocity curves of the worst-case braking scenario."""
    a_min, a_max, t1, v_min = p.a_min, p.a_max, p.t1, p.v_min
    v_e = np.asarray(v_e, dtype=np.float64)
    v_f = np.asarray(v_f, dtype=np.float64)
    a1 = -(v_e**2) / (2 * a_min) + v_f**2 / (2 * a_min)
    a2 = v_min * (v_e - v_f) / a_min
    a3 = a_max * t1**2 * (1 - a_max / a_min) + 0.0 * v_e
    a4 = (v_e - v_min) * t1 * (1 - a_max / a_min)
    return a1, a2, a3, a4


def handcrafted_coefficients(p: CruiseParams) -> dict[str, float]:
    """Coefficients of the can-accelerate polynomial, ``poly(s) + d_r >= d_safe``."""
    a_min, a_max, t1, v_min = p.a_min, p.a_max, p.t1, p.v_min
    k = 1 - a_max / a_min
    return {
        "v_e^2": 1 / (2 * a_min),
        "v_f^2": -1 / (2 * a_min),
        "v_e": -(v_min / a_min + t1 * k),
        "v_f": v_min / a_min,
        "d_r": 1.0,
        "const": -k * t1 * (t1 * a_max - v_min),
    }


def handcrafted_can_accelerate(state, p: CruiseParams):
    """Left side of the can-accelerate inequality minus ``d_safe``; accelerating is deemed safe iff >= 0."""
    s = np.asarray(state, dtype=np.float64)
    v_e, v_f, d_r = s[..., 0], s[..., 1], s[..., 2]
    c = handcrafted_coefficients(p)
    return (
        c["v_e^2"] * v_e**2
        + c["v_f^2"] * v_f**2
        + c["v_e"] * v_e
        + c["v_f"] * v_f
        + d_r
        + c["const"]
        - p.d_safe
    )
