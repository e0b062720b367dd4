"""Stochastic simulation of the adaptive voter model.

Update rule per event: pick a link uniformly at random. An inert link
(endpoints agree) does nothing. On an active link one endpoint is chosen
with probability 1/2 to resolve the conflict: with probability p it rewires
(cuts the link and connects to a uniform same-opinion agent that is neither
itself nor already a neighbor), otherwise it adopts the partner's opinion.
Each link selection advances model time by 1/K, so every link is selected
once per unit time on average, matching the rate convention of the moment
ODE layer.
"""

import logging
import math
import random
from dataclasses import dataclass

import numpy as np

from . import network
from .series import TimeSeries

log = logging.getLogger(__name__)

EVENT_INERT = "inert"
EVENT_ADOPTED = "adopted"
EVENT_REWIRED = "rewired"
EVENT_SKIPPED = "skipped"


@dataclass
class SimConfig:
    n: int
    mean_degree: float
    p: float
    t_end: float
    seed: int
    sample_interval: float = 0.25
    rejection_free: bool = False
    initial_a_count: int = None   # tests only; defaults to n // 2

    def validate(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.sample_interval <= 0:
            raise ValueError("sample_interval must be positive")


class SimState:
    """Mutable simulation state with an incrementally maintained active set.

    Edges live in K fixed slots; rewiring reuses the slot of the cut link,
    so the edge count is constant by construction. Opinion membership lists
    and the active-slot list support O(1) uniform sampling and removal.
    """

    def __init__(self, graph, opinions, p):
        self.n = graph.n
        self.k_edges = graph.edge_count
        self.p = p
        self.time = 0.0
        self.edge_u = [u for u, _ in graph.edges]
        self.edge_v = [v for _, v in graph.edges]
        self.slot_of = {(u, v): i for i, (u, v) in enumerate(graph.edges)}
        self.adj = [set(s) for s in graph.adjacency]
        self.opinions = [int(x) for x in opinions.values]
        # node lists per opinion, with per-node positions for O(1) moves
        self.members = ([], [])
        self.member_pos = [0] * self.n
        for node, s in enumerate(self.opinions):
            self.member_pos[node] = len(self.members[s])
            self.members[s].append(node)
        # active slot list + position index (-1 when inert)
        self.active_slots = []
        self.active_pos = [-1] * self.k_edges
        for slot in range(self.k_edges):
            if self.opinions[self.edge_u[slot]] != self.opinions[self.edge_v[slot]]:
                self._activate(slot)

    # -- active set bookkeeping -------------------------------------------
    def _activate(self, slot):
        if self.active_pos[slot] < 0:
            self.active_pos[slot] = len(self.active_slots)
            self.active_slots.append(slot)

    def _deactivate(self, slot):
        pos = self.active_pos[slot]
        if pos >= 0:
            last = self.active_slots[-1]
            self.active_slots[pos] = last
            self.active_pos[last] = pos
            self.active_slots.pop()
            self.active_pos[slot] = -1

    @property
    def active_count(self):
        return len(self.active_slots)

    def gamma(self):
        """Active links per A-node under the balanced split: 2 |active| / n."""
        return 2.0 * len(self.active_slots) / self.n

    # -- event processing --------------------------------------------------
    def _resolve(self, slot, rng):
        """Resolve the conflict on an active link; returns the event kind."""
        u, v = self.edge_u[slot], self.edge_v[slot]
        if rng.random() < 0.5:
            a, b = u, v
        else:
            a, b = v, u
        if rng.random() < self.p:
            return self._rewire(slot, a, b, rng)
        return self._adopt(a, b)

    def _rewire(self, slot, a, b, rng):
        same = self.members[self.opinions[a]]
        adj_a = self.adj[a]
        target = -1
        for _ in range(len(same) - 1):
            cand = same[rng.randrange(len(same))]
            if cand != a and cand not in adj_a:
                target = cand
                break
        if target < 0:
            return EVENT_SKIPPED
        lo, hi = (a, b) if a < b else (b, a)
        del self.slot_of[(lo, hi)]
        adj_a.discard(b)
        self.adj[b].discard(a)
        self._deactivate(slot)
        lo, hi = (a, target) if a < target else (target, a)
        self.slot_of[(lo, hi)] = slot
        self.edge_u[slot] = lo
        self.edge_v[slot] = hi
        adj_a.add(target)
        self.adj[target].add(a)
        # new link joins same-opinion agents: stays inert
        return EVENT_REWIRED

    def _adopt(self, a, b):
        old = self.opinions[a]
        new = self.opinions[b]
        src = self.members[old]
        pos = self.member_pos[a]
        last = src[-1]
        src[pos] = last
        self.member_pos[last] = pos
        src.pop()
        self.member_pos[a] = len(self.members[new])
        self.members[new].append(a)
        self.opinions[a] = new
        slot_of = self.slot_of
        opinions = self.opinions
        for w in self.adj[a]:
            slot = slot_of[(a, w)] if a < w else slot_of[(w, a)]
            if opinions[w] != new:
                self._activate(slot)
            else:
                self._deactivate(slot)
        return EVENT_ADOPTED


def init_state(config):
    config.validate()
    graph_seed, opinion_seed, _ = _derive_seeds(config.seed)
    graph = network.generate_er(config.n, config.mean_degree, graph_seed)
    opinions = network.assign_opinions(graph, opinion_seed,
                                       a_count=config.initial_a_count)
    return SimState(graph, opinions, config.p)


def _derive_seeds(seed):
    state = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    return tuple(int(x) for x in state)


def step(state, rng):
    """Process one uniformly chosen link; advances time by 1/K."""
    if state.k_edges == 0:
        raise ValueError("graph has no links")
    slot = rng.randrange(state.k_edges)
    state.time += 1.0 / state.k_edges
    if state.opinions[state.edge_u[slot]] == state.opinions[state.edge_v[slot]]:
        return EVENT_INERT
    return state._resolve(slot, rng)


def step_active(state, rng):
    """Rejection-free variant: jump straight to the next active selection.

    Samples the geometric number of uniform link draws needed to hit an
    active link, advances time by that count / K, then resolves a uniform
    active link. Distributionally equivalent to repeated step() calls.
    """
    m = len(state.active_slots)
    if m == 0:
        raise ValueError("no active links to select")
    q = m / state.k_edges
    if q >= 1.0:
        draws = 1
    else:
        draws = 1 + int(math.log(1.0 - rng.random()) / math.log(1.0 - q))
    state.time += draws / state.k_edges
    slot = state.active_slots[rng.randrange(m)]
    return state._resolve(slot, rng)


def run(config):
    """Simulate one replicate and sample gamma on a regular grid.

    Stops early once no active link remains (gamma = 0 is absorbing); the
    remaining sample points are padded with the exact value 0. Sample times
    are multiples of sample_interval from 0 through t_end.
    """
    config.validate()
    state = init_state(config)
    _, _, stream_seed = _derive_seeds(config.seed)
    rng = random.Random(stream_seed)

    sample_ts = [0.0]
    samples = [state.gamma()]
    next_t = config.sample_interval
    eps = 1e-12
    while state.time < config.t_end and state.active_slots:
        before = state.gamma()
        if config.rejection_free:
            step_active(state, rng)
        else:
            step(state, rng)
        # points strictly inside the jump see the pre-event state
        while next_t < state.time - eps and next_t <= config.t_end + eps:
            sample_ts.append(next_t)
            samples.append(before)
            next_t += config.sample_interval
        while next_t <= state.time + eps and next_t <= config.t_end + eps:
            sample_ts.append(next_t)
            samples.append(state.gamma())
            next_t += config.sample_interval
    absorbed_at = state.time if not state.active_slots else None
    tail = state.gamma()
    while next_t <= config.t_end + eps:
        sample_ts.append(next_t)
        samples.append(tail)
        next_t += config.sample_interval
    meta = {
        "p": config.p, "kappa": config.mean_degree, "n": config.n,
        "seed": config.seed, "mode": "rejection-free" if config.rejection_free else "uniform",
        "absorbed_at": absorbed_at,
    }
    return TimeSeries(sample_ts, samples, "abm", meta=meta), state


def detect_fragmentation(state):
    """Connected components and whether each is internally in consensus.

    Returns (component_count, [all_same_opinion per component]).
    """
    seen = [False] * state.n
    flags = []
    for start in range(state.n):
        if seen[start]:
            continue
        opinion = state.opinions[start]
        uniform = True
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            if state.opinions[node] != opinion:
                uniform = False
            for w in state.adj[node]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        flags.append(uniform)
    return len(flags), flags


def audit(state):
    """Recompute derived structures from scratch and compare.

    Returns False (with logged diagnostics) on any mismatch between the
    incremental active set, the adjacency, the slot index, and the fixed
    edge count.
    """
    ok = True
    if len(state.edge_u) != state.k_edges or len(state.edge_v) != state.k_edges:
        log.warning("audit: edge slot arrays have wrong length")
        ok = False
    pairs = set()
    for slot in range(state.k_edges):
        u, v = state.edge_u[slot], state.edge_v[slot]
        if u == v:
            log.warning("audit: self-loop in slot %d", slot)
            ok = False
        key = (u, v) if u < v else (v, u)
        if key in pairs:
            log.warning("audit: duplicate edge %s", key)
            ok = False
        pairs.add(key)
        if state.slot_of.get(key) != slot:
            log.warning("audit: slot index mismatch for %s", key)
            ok = False
        if v not in state.adj[u] or u not in state.adj[v]:
            log.warning("audit: adjacency missing edge %s", key)
            ok = False
    degree_sum = sum(len(s) for s in state.adj)
    if degree_sum != 2 * state.k_edges:
        log.warning("audit: adjacency degree sum %d != 2K", degree_sum)
        ok = False
    expected_active = {
        slot for slot in range(state.k_edges)
        if state.opinions[state.edge_u[slot]] != state.opinions[state.edge_v[slot]]
    }
    if expected_active != set(state.active_slots):
        log.warning("audit: active set mismatch (%d tracked vs %d recomputed)",
                    len(state.active_slots), len(expected_active))
        ok = False
    for slot in range(state.k_edges):
        pos = state.active_pos[slot]
        if pos >= 0 and state.active_slots[pos] != slot:
            log.warning("audit: active position index broken at slot %d", slot)
            ok = False
    return ok


def run_ensemble(config, replicates, workers=1):
    """Independent replicates with per-replicate derived seeds.

    Results are ordered by replicate index regardless of scheduling.
    """
    configs = []
    for rep in range(replicates):
        rep_seed = int(np.random.SeedSequence([config.seed, rep]).generate_state(1)[0])
        c = SimConfig(config.n, config.mean_degree, config.p, config.t_end,
                      rep_seed, config.sample_interval, config.rejection_free,
                      config.initial_a_count)
        configs.append(c)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, configs))
    else:
        results = [_run_replicate(c) for c in configs]
    out = []
    for rep, (series, summary) in enumerate(results):
        series.meta["replicate"] = rep
        summary["replicate"] = rep
        out.append((series, summary))
    return out


def _run_replicate(config):
    series, state = run(config)
    n_comp, flags = detect_fragmentation(state)
    summary = {
        "final_gamma": state.gamma(),
        "components": n_comp,
        "all_consensus": all(flags),
    }
    return series, summary
