"""Exact event-driven simulation (Gillespie with thinning).

Random numbers are consumed in a fixed order per step:

1. waiting time ``rng.exponential(1 / total)``;
2. one uniform choosing the channel in proportion to its (bound) total;
3. channel draws: a uniform picking the particle (death victim, parent or
   departing particle) when there is one, ``d`` uniforms for a uniform
   birth location or one kernel displacement, then one thinning uniform
   whenever the channel has factors at the new point.

Per-particle interaction sums are kept up to date in O(N) per event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import Box, FiniteConfiguration
from .model import Channel, CompiledModel, factor_values


@dataclass(frozen=True)
class EventRecord:
    kind: str               # "birth" | "death" | "hop" | "rejected"
    time: float
    locations: tuple = ()   # affected point(s): new point, victim, or (from, to)


@dataclass
class SimState:
    points: np.ndarray
    time: float
    rng: np.random.Generator
    sums: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.points)

    def config(self) -> FiniteConfiguration:
        return FiniteConfiguration.from_array(self.points)


class Simulator:
    """Holds a compiled model and advances ``SimState`` objects one event at a time."""

    def __init__(self, model: CompiledModel, box: Box):
        self.model = model
        self.box = box
        self.d = box.d
        self.kernels = model.kernels
        self._mass = {name: k.torus_mass(box) for name, k in model.kernels.items()}
        self._kmax = {name: k.max_value(box.d) for name, k in model.kernels.items()}

    # -- state bookkeeping -------------------------------------------------------------
    def init_state(self, config, rng: np.random.Generator, time: float = 0.0) -> SimState:
        pts = config.as_array(self.d) if hasattr(config, "as_array") else np.asarray(config, dtype=float)
        pts = np.asarray(pts, dtype=float).reshape(-1, self.d).copy()
        state = SimState(pts, time, rng)
        for name in self.model.anchored_kernels:
            k = self.kernels[name]
            s = np.zeros(len(pts))
            for i in range(len(pts)):
                v = k.evaluate(pts - pts[i], self.box)
                v[i] = 0.0
                s[i] = math.fsum(v)
            state.sums[name] = s
        return state

    def _add(self, state: SimState, z: np.ndarray) -> None:
        for name in self.model.anchored_kernels:
            v = self.kernels[name].evaluate(state.points - z, self.box)
            state.sums[name] = np.append(state.sums[name] + v, float(np.sum(v)))
        state.points = np.vstack([state.points, z[None, :]])

    def _remove(self, state: SimState, i: int) -> None:
        xi = state.points[i]
        state.points = np.delete(state.points, i, axis=0)
        for name in self.model.anchored_kernels:
            s = np.delete(state.sums[name], i)
            s -= self.kernels[name].evaluate(state.points - xi, self.box)
            state.sums[name] = s

    # -- rates ---------------------------------------------------------------------------
    def _weights(self, ch: Channel, state: SimState) -> np.ndarray:
        sums = {k: np.maximum(v, 0.0) for k, v in state.sums.items()}
        w = factor_values(ch.factors, sums, self.kernels, self.d)
        return np.broadcast_to(ch.coef * np.asarray(w, dtype=float), (state.n,))

    def _arrival_bound(self, ch: Channel, n_others: int) -> float:
        b = 1.0
        for f in ch.located:
            if f.kind == "sum":
                b *= n_others * self._kmax[f.kernel]
        return b

    def channel_totals(self, state: SimState) -> list:
        """(channel, total, per-particle weights or None, is_bound) for every channel."""
        out = []
        vol = self.box.volume
        for ch in self.model.channels:
            if ch.part == "death":
                w = self._weights(ch, state)
                out.append((ch, float(np.sum(w)), w, False))
            elif ch.part == "birth" and ch.link is None:
                out.append((ch, ch.coef * vol, None, bool(ch.located)))
            elif ch.part == "birth":
                w = self._weights(ch, state) * self._mass[ch.link]
                out.append((ch, float(np.sum(w)), w, bool(ch.located)))
            else:
                w = self._weights(ch, state) * self._mass[ch.link] * self._arrival_bound(ch, state.n - 1)
                out.append((ch, float(np.sum(w)), w, bool(ch.located)))
        return out

    def total_rates(self, state: SimState) -> dict:
        totals = {"death": 0.0, "birth": 0.0, "hop": 0.0}
        bounds = {"death": False, "birth": False, "hop": False}
        for ch, tot, _, is_bound in self.channel_totals(state):
            totals[ch.part] += tot
            bounds[ch.part] = bounds[ch.part] or is_bound
        return {"death_total": totals["death"], "birth_total": totals["birth"],
                "hop_total": totals["hop"], "bounds": bounds}

    def located_value(self, ch: Channel, state: SimState, z: np.ndarray, skip: int | None = None) -> float:
        """Thinning factors at point z, summing over the configuration minus ``skip``."""
        val = 1.0
        pts = state.points if skip is None else np.delete(state.points, skip, axis=0)
        for f in ch.located:
            s = math.fsum(self.kernels[f.kernel].evaluate(pts - z, self.box)) if len(pts) else 0.0
            val *= s if f.kind == "sum" else math.exp(f.weight * s)
        return val

    # -- one event -------------------------------------------------------------------------
    def step(self, state: SimState, t_max: float = math.inf):
        """Advance one event.  Returns an ``EventRecord`` or None when the total rate is 0
        or the next event would fall after ``t_max`` (the state is then left at ``t_max``)."""
        rng = state.rng
        table = self.channel_totals(state)
        total = math.fsum(t for _, t, _, _ in table)
        if total <= 0:
            state.time = t_max
            return None
        tau = rng.exponential(1.0 / total)
        if state.time + tau > t_max:
            state.time = t_max
            return None
        state.time += tau
        u = rng.random() * total
        acc = 0.0
        chosen = table[-1]
        for row in table:
            acc += row[1]
            if u < acc and row[1] > 0:
                chosen = row
                break
        ch, tot, w, _ = chosen
        i = None
        if w is not None:
            cw = np.cumsum(w)
            i = int(min(np.searchsorted(cw, rng.random() * cw[-1], side="right"), len(cw) - 1))
        if ch.part == "death":
            xi = state.points[i].copy()
            self._remove(state, i)
            return EventRecord("death", state.time, (tuple(xi),))
        if ch.part == "birth":
            if ch.link is None:
                z = rng.random(self.d) * self.box.L
            else:
                z = self.box.wrap(state.points[i] + self.kernels[ch.link].sample_displacement(rng, self.box))
            if ch.located:
                if rng.random() >= self.located_value(ch, state, z):
                    return EventRecord("rejected", state.time, (tuple(z),))
            self._add(state, z)
            return EventRecord("birth", state.time, (tuple(z),))
        xi = state.points[i].copy()
        z = self.box.wrap(xi + self.kernels[ch.link].sample_displacement(rng, self.box))
        if ch.located:
            bound = self._arrival_bound(ch, state.n - 1)
            if rng.random() * bound >= self.located_value(ch, state, z, skip=i):
                return EventRecord("rejected", state.time, (tuple(xi), tuple(z)))
        self._remove(state, i)
        self._add(state, z)
        return EventRecord("hop", state.time, (tuple(xi), tuple(z)))
