"""Test-split video selection as a constrained variance-minimisation problem.

Choose exactly ``n_target`` videos so that the summed interaction histogram
and the summed object histogram are as flat as possible (sum of population
variances), subject to per-interaction floors and a floor on the object
location mass in the top half of the heatmap.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, SizeGuardError

EXACT_LIMIT = 20
_CHUNK = 4096


@dataclass
class SplitProblem:
    interactions: np.ndarray  # (N, N_a)
    objects: np.ndarray  # (N, N_o)
    heatmaps: np.ndarray  # (N, N_h)
    n_target: int
    floors: np.ndarray  # (N_a,)
    top_floor: float = 0.0
    ids: Optional[List[str]] = None

    def __post_init__(self):
        self.interactions = np.asarray(self.interactions, dtype=np.float64)
        self.objects = np.asarray(self.objects, dtype=np.float64)
        self.heatmaps = np.asarray(self.heatmaps, dtype=np.float64)
        n = self.interactions.shape[0]
        for name in ("interactions", "objects", "heatmaps"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise ConfigurationError(f"{name} must be an (N, k) table with N={n}")
            if np.any(arr < 0):
                raise ConfigurationError(f"{name} has negative counts")
        self.floors = np.asarray(self.floors, dtype=np.float64)
        if self.floors.size == 0:
            self.floors = np.zeros(self.interactions.shape[1])
        if self.floors.shape != (self.interactions.shape[1],):
            raise ConfigurationError("one floor per interaction class required")
        if np.any(self.floors < 0):
            raise ConfigurationError("floors must be non-negative")
        if not 0 < self.n_target <= n:
            raise ConfigurationError(f"n_target must be in 1..{n}, got {self.n_target}")
        if self.ids is None:
            self.ids = [str(i) for i in range(n)]
        if len(self.ids) != n:
            raise ConfigurationError("one id per video required")

    @property
    def n_videos(self) -> int:
        return self.interactions.shape[0]

    @property
    def top_mass(self) -> np.ndarray:
        """Per-video heatmap mass in the first (top) half of the cells."""
        return self.heatmaps[:, : self.heatmaps.shape[1] // 2].sum(axis=1)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitProblem":
        videos = d["videos"]
        return cls(
            interactions=np.array([v["interactions"] for v in videos], dtype=np.float64).reshape(len(videos), -1),
            objects=np.array([v["objects"] for v in videos], dtype=np.float64).reshape(len(videos), -1),
            heatmaps=np.array([v["heatmap"] for v in videos], dtype=np.float64).reshape(len(videos), -1),
            n_target=int(d["n_target"]),
            floors=np.asarray(d.get("floors") or [], dtype=np.float64),
            top_floor=float(d.get("top_floor", 0.0)),
            ids=[str(v.get("id", i)) for i, v in enumerate(videos)],
        )

    def to_dict(self) -> dict:
        def plain(row):
            return [int(x) if float(x).is_integer() else float(x) for x in row]
        return {
            "n_target": self.n_target,
            "floors": plain(self.floors),
            "top_floor": self.top_floor,
            "videos": [
                {"id": vid, "interactions": plain(a), "objects": plain(o), "heatmap": plain(c)}
                for vid, a, o, c in zip(self.ids, self.interactions, self.objects, self.heatmaps)
            ],
        }


@dataclass
class Feasibility:
    size_ok: bool
    floor_slack: List[float]
    top_slack: float

    @property
    def floors_ok(self) -> List[bool]:
        return [s >= 0 for s in self.floor_slack]

    @property
    def top_ok(self) -> bool:
        return self.top_slack >= 0

    @property
    def feasible(self) -> bool:
        return self.size_ok and all(self.floors_ok) and self.top_ok

    @property
    def deficit(self) -> float:
        return sum(-s for s in self.floor_slack if s < 0) + max(0.0, -self.top_slack)

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "size_ok": self.size_ok,
            "floors_ok": self.floors_ok,
            "floor_slack": self.floor_slack,
            "top_ok": self.top_ok,
            "top_slack": self.top_slack,
        }


@dataclass
class SplitSolution:
    selected: List[int]
    z: Optional[float]
    feasibility: Feasibility
    method: str
    history: List[float] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.feasibility.feasible

    def to_dict(self, problem: SplitProblem) -> dict:
        return {
            "method": self.method,
            "feasible": self.feasible,
            "selected": [problem.ids[i] for i in self.selected],
            "selected_index": list(self.selected),
            "z": self.z,
            "constraints": self.feasibility.to_dict(),
        }


def _variance(v: np.ndarray) -> float:
    return float(np.var(v)) if v.size else 0.0


def objective(p: SplitProblem, sel: Sequence[int]) -> float:
    idx = sorted(sel)
    return _variance(p.interactions[idx].sum(axis=0)) + _variance(p.objects[idx].sum(axis=0))


def check_feasible(p: SplitProblem, sel: Sequence[int]) -> Feasibility:
    idx = sorted(set(sel))
    totals = p.interactions[idx].sum(axis=0)
    top = float(p.top_mass[idx].sum())
    return Feasibility(
        size_ok=len(idx) == p.n_target,
        floor_slack=[float(x) for x in totals - p.floors],
        top_slack=top - p.top_floor,
    )


def _chunk_best(p: SplitProblem, combos: np.ndarray):
    a = p.interactions[combos].sum(axis=1)
    o = p.objects[combos].sum(axis=1)
    ok = np.all(a >= p.floors, axis=1) & (p.top_mass[combos].sum(axis=1) >= p.top_floor)
    if not ok.any():
        return None
    z = np.var(a, axis=1) + np.var(o, axis=1)
    z[~ok] = np.inf
    k = int(np.argmin(z))  # first minimum in lexicographic order
    return float(z[k]), tuple(int(i) for i in combos[k])


def _chunks(n: int, k: int):
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.int64).reshape(len(block), k)


def solve_exact(p: SplitProblem, threads: int = 1) -> SplitSolution:
    """Globally optimal feasible selection by exhaustive enumeration.

    Ties are resolved towards the lexicographically smallest index tuple.
    """
    if p.n_videos > EXACT_LIMIT:
        raise SizeGuardError(f"exhaustive search is limited to {EXACT_LIMIT} videos, got {p.n_videos}")
    chunks = _chunks(p.n_videos, p.n_target)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partial = list(pool.map(lambda c: _chunk_best(p, c), chunks))
    else:
        partial = [_chunk_best(p, c) for c in chunks]
    best = None
    for res in partial:
        if res is not None and (best is None or res[0] < best[0]):
            best = res
    if best is None:
        return SplitSolution([], None, check_feasible(p, []), "exact")
    sel = list(best[1])
    return SplitSolution(sel, objective(p, sel), check_feasible(p, sel), "exact")


def _repair_pool(p: SplitProblem, sel: List[int], remaining: List[int]) -> List[int]:
    """Unselected videos that help the most-violated floor, or all if none apply."""
    feas = check_feasible(p, sel)
    # Interaction floors come first by index; the top-half floor sorts last.
    deficits = [(-s, j) for j, s in enumerate(feas.floor_slack) if s < 0]
    if feas.top_slack < 0:
        deficits.append((-feas.top_slack, len(feas.floor_slack)))
    deficits.sort(key=lambda d: (-d[0], d[1]))
    n_a = p.interactions.shape[1]
    for _, j in deficits:
        gain = p.top_mass if j == n_a else p.interactions[:, j]
        helpers = [i for i in remaining if gain[i] > 0]
        if helpers:
            return helpers
    return remaining


def greedy(p: SplitProblem) -> List[int]:
    sel: List[int] = []
    remaining = list(range(p.n_videos))
    for _ in range(p.n_target):
        pool = _repair_pool(p, sel, remaining)
        pick = min(pool, key=lambda i: (objective(p, sel + [i]), i))
        sel.append(pick)
        remaining.remove(pick)
    return sorted(sel)


def _local_search(p: SplitProblem, sel: List[int], rng, iterations: int):
    def key(s):
        return (check_feasible(p, s).deficit, objective(p, s))

    current = key(sel)
    history = [current[1]]
    for _ in range(iterations):
        outside = [i for i in range(p.n_videos) if i not in sel]
        pairs = [(a, b) for a in range(len(sel)) for b in outside]
        improved = False
        for k in rng.permutation(len(pairs)):
            pos, incoming = pairs[k]
            trial = sorted(sel[:pos] + sel[pos + 1:] + [incoming])
            cand = key(trial)
            if cand < current:
                sel, current = trial, cand
                history.append(cand[1])
                improved = True
                break
        if not improved:
            break
    return sel, current, history


def solve_heuristic(p: SplitProblem, seed: int = 0, iterations: int = 1000,
                    restarts: int = 8) -> SplitSolution:
    """Greedy construction plus first-improvement 1-swap local search.

    A swap is accepted when it lowers (constraint deficit, objective)
    lexicographically, so once feasible the objective never rises; each
    descent accepts at most ``iterations`` swaps. ``restarts`` further
    descents start from seeded random selections and the best result over
    all descents is kept, so the answer is never worse than the greedy one.
    """
    if iterations < 0 or restarts < 0:
        raise ConfigurationError("iterations and restarts must be non-negative")
    rng = np.random.default_rng(seed)
    sel, best, history = _local_search(p, greedy(p), rng, iterations)
    if iterations > 0:
        for _ in range(restarts):
            start = sorted(int(i) for i in rng.choice(p.n_videos, p.n_target, replace=False))
            cand_sel, cand, _ = _local_search(p, start, rng, iterations)
            if cand < best:
                sel, best = cand_sel, cand
    return SplitSolution(sel, objective(p, sel), check_feasible(p, sel), "heuristic", history)


def relative_gap(z_heuristic: float, z_exact: float) -> float:
    if z_exact == 0:
        return 0.0 if math.isclose(z_heuristic, 0.0, abs_tol=1e-12) else math.inf
    return (z_heuristic - z_exact) / z_exact
