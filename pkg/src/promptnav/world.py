"""Procedural navigation environments: connected geometric graphs, per-node
renders, templated instructions, and episode splits."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError
from .render import (OBJECT_CLASSES, SCENE_CLASSES, STYLES, load_png, render_scene,
                     save_png)
from .seeding import stage_rng, substream_seed


@dataclass
class ConnectivityGraph:
    pos: dict[int, tuple[float, float]]
    adj: dict[int, list[tuple[int, float]]]  # node -> sorted (neighbor, length)
    scene: dict[int, str]
    objects: dict[int, list[str]]

    @property
    def nodes(self) -> list[int]:
        return sorted(self.pos)

    def neighbors(self, u: int) -> list[int]:
        return [v for v, _ in self.adj[u]]

    def edge_length(self, u: int, v: int) -> float:
        for w, length in self.adj[u]:
            if w == v:
                return length
        raise ContractError(f"no edge {u}-{v}")

    def has_node(self, u: int) -> bool:
        return u in self.pos

    def dijkstra(self, src: int) -> tuple[dict[int, float], dict[int, int]]:
        """Exact geodesics from src; ties broken toward lower node ids by the
        (distance, node) heap ordering."""
        if src not in self.pos:
            raise ContractError(f"unknown node {src}")
        dist = {src: 0.0}
        prev: dict[int, int] = {}
        heap = [(0.0, src)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, length in self.adj[u]:
                nd = d + length
                if v not in dist or nd < dist[v] or (nd == dist[v] and u < prev.get(v, 1 << 30)):
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        return dist, prev

    def shortest_path(self, a: int, b: int) -> tuple[list[int], float]:
        if a not in self.pos or b not in self.pos:
            raise ContractError(f"unknown node in shortest_path({a}, {b})")
        if a == b:
            return [a], 0.0
        dist, prev = self.dijkstra(a)
        if b not in dist:
            raise ContractError(f"no path {a} -> {b}")
        path = [b]
        while path[-1] != a:
            path.append(prev[path[-1]])
        return path[::-1], dist[b]

    def geodesics_from(self, src: int) -> dict[int, float]:
        return self.dijkstra(src)[0]

    def is_connected(self) -> bool:
        if not self.pos:
            return False
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            u = stack.pop()
            for v, _ in self.adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.pos)


def _euclid(p: tuple[float, float], q: tuple[float, float]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def generate_graph(rng: np.random.Generator, num_nodes: int = 30,
                   avg_degree: float = 3.0, box: float = 16.0) -> ConnectivityGraph:
    """Random geometric graph augmented with minimum-length cross-component
    edges until connected."""
    if num_nodes < 2:
        raise ContractError(f"num_nodes must be >= 2, got {num_nodes}")
    pts = rng.uniform(0.0, box, size=(num_nodes, 2))
    pos = {i: (float(pts[i, 0]), float(pts[i, 1])) for i in range(num_nodes)}
    radius = box * math.sqrt(max(avg_degree, 0.1) / (math.pi * num_nodes))
    edges: set[tuple[int, int]] = set()
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            if _euclid(pos[i], pos[j]) <= radius:
                edges.add((i, j))

    # union-find over components; stitch with the shortest available edge
    parent = list(range(num_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in sorted(edges):
        parent[find(i)] = find(j)
    while len({find(i) for i in range(num_nodes)}) > 1:
        best = None
        for i in range(num_nodes):
            for j in range(i + 1, num_nodes):
                if find(i) != find(j):
                    cand = (_euclid(pos[i], pos[j]), i, j)
                    if best is None or cand < best:
                        best = cand
        _, i, j = best
        edges.add((i, j))
        parent[find(i)] = find(j)

    adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(num_nodes)}
    for i, j in sorted(edges):
        length = _euclid(pos[i], pos[j])
        adj[i].append((j, length))
        adj[j].append((i, length))
    for i in adj:
        adj[i].sort()

    scene = {i: SCENE_CLASSES[int(rng.integers(len(SCENE_CLASSES)))] for i in range(num_nodes)}
    objects = {}
    for i in range(num_nodes):
        k = int(rng.integers(1, 4))
        objects[i] = sorted(rng.choice(OBJECT_CLASSES, size=k, replace=False).tolist())
    return ConnectivityGraph(pos=pos, adj=adj, scene=scene, objects=objects)


@dataclass
class EnvBundle:
    env_id: int
    graph: ConnectivityGraph
    renders: dict[int, np.ndarray]  # node -> uint8 image (indomain style)


def generate_environment(root_seed: int, env_id: int, num_nodes: int = 30,
                         avg_degree: float = 3.0, box: float = 16.0,
                         style_tag: str = "indomain") -> EnvBundle:
    rng = stage_rng(root_seed, "world", env_id)
    graph = generate_graph(rng, num_nodes=num_nodes, avg_degree=avg_degree, box=box)
    style = STYLES[style_tag]
    renders = {}
    for node in graph.nodes:
        node_rng = stage_rng(root_seed, "world", env_id, node)
        renders[node] = render_scene(graph.scene[node], graph.objects[node],
                                     None, style, node_rng)
    return EnvBundle(env_id=env_id, graph=graph, renders=renders)


# ---------------------------------------------------------------------------
# instructions
# ---------------------------------------------------------------------------

_R2R_OPENERS = ["walk to the {s}", "head to the {s}", "go to the {s}"]
_R2R_MIDDLES = ["then go to the {s}", "then enter the {s}", "continue to the {s}"]
_R2R_ENDERS = ["stop near the {o}", "stop by the {o}", "wait near the {o}"]
_REVERIE_FORMS = [
    "go to the {s} and find the {o}",
    "find the {o} in the {s}",
    "bring me the {o} from the {s}",
]


def grammar_words() -> list[str]:
    words = set()
    for form in _R2R_OPENERS + _R2R_MIDDLES + _R2R_ENDERS + _REVERIE_FORMS + ["stop ."]:
        for w in form.replace("{s}", "").replace("{o}", "").split():
            w = "".join(c for c in w if c.isalnum())
            if w:
                words.add(w)
    for name in SCENE_CLASSES + OBJECT_CLASSES:
        words.update(name.split())
    words.update("a photo of with and in".split())
    return sorted(words)


def generate_instruction(graph: ConnectivityGraph, path: list[int], kind: str,
                         seed: int, target_object: str) -> str:
    """Deterministic templated instruction for a path. r2r_like walks the
    scene sequence; reverie_like names the goal scene and target object."""
    if not path:
        raise ContractError("empty path")
    rng = np.random.default_rng(seed)
    if len(path) == 1:
        return "stop ."
    goal_scene = graph.scene[path[-1]]
    if kind == "reverie_like":
        form = _REVERIE_FORMS[int(rng.integers(len(_REVERIE_FORMS)))]
        return form.format(s=goal_scene, o=target_object) + " ."
    if kind != "r2r_like":
        raise ContractError(f"unknown episode kind: {kind!r}")
    scenes = []
    for node in path[1:]:
        s = graph.scene[node]
        if not scenes or scenes[-1] != s:
            scenes.append(s)
    if len(scenes) > 3:
        scenes = [scenes[0], scenes[len(scenes) // 2], scenes[-1]]
    parts = [_R2R_OPENERS[int(rng.integers(len(_R2R_OPENERS)))].format(s=scenes[0])]
    for s in scenes[1:]:
        parts.append(_R2R_MIDDLES[int(rng.integers(len(_R2R_MIDDLES)))].format(s=s))
    parts.append(_R2R_ENDERS[int(rng.integers(len(_R2R_ENDERS)))].format(o=target_object))
    return " , ".join(parts) + " ."


# ---------------------------------------------------------------------------
# episodes and splits
# ---------------------------------------------------------------------------

@dataclass
class Episode:
    episode_id: str
    env_id: int
    start: int
    goal: int
    kind: str
    seed: int
    instruction: str
    path: list[int]
    target_object: str
    threshold: float


def _sample_episode(env: EnvBundle, rng: np.random.Generator, episode_id: str,
                    kind: str, threshold: float, min_hops: int, root_seed: int,
                    used_pairs: set[tuple[int, int]] | None = None) -> Episode:
    graph = env.graph
    nodes = graph.nodes
    for _ in range(200):
        start = int(nodes[int(rng.integers(len(nodes)))])
        goal = int(nodes[int(rng.integers(len(nodes)))])
        if start == goal:
            continue
        if used_pairs is not None and (start, goal) in used_pairs:
            continue
        path, _ = graph.shortest_path(start, goal)
        if len(path) - 1 >= min_hops:
            break
    else:
        raise ContractError(f"could not sample an episode in env {env.env_id}")
    if used_pairs is not None:
        used_pairs.add((start, goal))
    target = graph.objects[goal][int(rng.integers(len(graph.objects[goal])))]
    ep_seed = substream_seed(root_seed, "world", env.env_id, start, goal, len(path))
    instr = generate_instruction(graph, path, kind, ep_seed, target)
    return Episode(episode_id=episode_id, env_id=env.env_id, start=start, goal=goal,
                   kind=kind, seed=ep_seed, instruction=instr, path=path,
                   target_object=target, threshold=threshold)


def make_splits(envs: list[EnvBundle], root_seed: int, n_train_envs: int,
                episodes_train: int, episodes_val_seen: int, episodes_unseen: int,
                threshold: float = 3.0, reverie_fraction: float = 0.5,
                min_hops: int = 2) -> dict[str, list[Episode]]:
    """train / val_seen from the first n_train_envs; val_unseen only from the
    held-out environments."""
    if len(envs) < 2 or not 0 < n_train_envs < len(envs):
        raise ContractError(f"need >=2 envs split into train/unseen, got "
                            f"{len(envs)} with {n_train_envs} train")
    splits: dict[str, list[Episode]] = {"train": [], "val_seen": [], "val_unseen": []}
    per_env_pairs: dict[int, set] = {}

    def fill(split: str, env: EnvBundle, count: int, track_pairs: bool):
        rng = stage_rng(root_seed, "world", 1000 + env.env_id,
                        {"train": 0, "val_seen": 1, "val_unseen": 2}[split])
        pairs = per_env_pairs.setdefault(env.env_id, set()) if track_pairs else None
        for i in range(count):
            kind = "reverie_like" if rng.random() < reverie_fraction else "r2r_like"
            ep = _sample_episode(env, rng, f"{split}_{env.env_id}_{i}", kind,
                                 threshold, min_hops, root_seed, used_pairs=pairs)
            splits[split].append(ep)

    for env in envs[:n_train_envs]:
        fill("train", env, episodes_train, track_pairs=True)
    for env in envs[:n_train_envs]:
        fill("val_seen", env, episodes_val_seen, track_pairs=True)
    for env in envs[n_train_envs:]:
        fill("val_unseen", env, episodes_unseen, track_pairs=False)
    return splits


# ---------------------------------------------------------------------------
# disk bundle
# ---------------------------------------------------------------------------

def save_environment(env: EnvBundle, root: str | Path) -> None:
    root = Path(root) / f"env_{env.env_id}"
    root.mkdir(parents=True, exist_ok=True)
    g = env.graph
    with open(root / "edges.txt", "w") as fh:
        seen = set()
        for u in g.nodes:
            for v, length in g.adj[u]:
                if (min(u, v), max(u, v)) in seen:
                    continue
                seen.add((min(u, v), max(u, v)))
                fh.write(f"{min(u, v)} {max(u, v)} {length!r}\n")
    with open(root / "nodes.txt", "w") as fh:
        for u in g.nodes:
            x, y = g.pos[u]
            fh.write(f"{u} {x!r} {y!r} {g.scene[u]} {';'.join(g.objects[u])}\n")
    for node, img in env.renders.items():
        save_png(img, root / "renders" / f"node_{node}.png")


def load_environment(root: str | Path, env_id: int) -> EnvBundle:
    root = Path(root) / f"env_{env_id}"
    pos, scene, objects = {}, {}, {}
    for line in (root / "nodes.txt").read_text().splitlines():
        u, x, y, sc, objs = line.split(" ")
        pos[int(u)] = (float(x), float(y))
        scene[int(u)] = sc
        objects[int(u)] = objs.split(";")
    adj: dict[int, list[tuple[int, float]]] = {u: [] for u in pos}
    for line in (root / "edges.txt").read_text().splitlines():
        u, v, length = line.split(" ")
        adj[int(u)].append((int(v), float(length)))
        adj[int(v)].append((int(u), float(length)))
    for u in adj:
        adj[u].sort()
    graph = ConnectivityGraph(pos=pos, adj=adj, scene=scene, objects=objects)
    renders = {u: load_png(root / "renders" / f"node_{u}.png") for u in pos}
    return EnvBundle(env_id=env_id, graph=graph, renders=renders)


_EPISODE_FIELDS = ["env", "start", "goal", "kind", "seed", "instruction",
                   "target_object", "threshold"]


def save_episodes(episodes: list[Episode], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EPISODE_FIELDS)
        for ep in episodes:
            writer.writerow([ep.env_id, ep.start, ep.goal, ep.kind, ep.seed,
                             ep.instruction, ep.target_object, repr(ep.threshold)])


def load_episodes(path: str | Path, envs: dict[int, EnvBundle],
                  split: str) -> list[Episode]:
    episodes = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            env = envs[int(row["env"])]
            start, goal = int(row["start"]), int(row["goal"])
            path_nodes, _ = env.graph.shortest_path(start, goal)
            episodes.append(Episode(
                episode_id=f"{split}_{row['env']}_{i}", env_id=int(row["env"]),
                start=start, goal=goal, kind=row["kind"], seed=int(row["seed"]),
                instruction=row["instruction"], path=path_nodes,
                target_object=row["target_object"], threshold=float(row["threshold"])))
    return episodes
