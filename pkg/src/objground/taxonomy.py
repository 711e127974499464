"""Object-class clustering and class-tree construction over a hypernym graph.

The graph is a plain child -> parent edge list, so no lexical database is
needed at run time. Words resolve to graph nodes by name unless an override
table remaps them (used for polysemous class names).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import MergeFailureError, ValidationError

log = logging.getLogger(__name__)


class TaxonomyGraph:
    def __init__(self, edges: Sequence[Tuple[str, str]]):
        self.parents: Dict[str, List[str]] = {}
        self.children: Dict[str, List[str]] = {}
        for child, parent in edges:
            for n in (child, parent):
                self.parents.setdefault(n, [])
                self.children.setdefault(n, [])
            if parent not in self.parents[child]:
                self.parents[child].append(parent)
                self.children[parent].append(child)
        self.depth = self._levels()
        self._component = self._components()

    @classmethod
    def from_tsv(cls, source: Union[str, Path], text: Optional[str] = None) -> "TaxonomyGraph":
        if text is None:
            text = Path(source).read_text(encoding="utf-8")
        return cls(_parse_pairs(text, str(source)))

    @classmethod
    def toy(cls) -> "TaxonomyGraph":
        """The bundled 60-node fixture graph."""
        ref = resources.files("objground") / "data" / "toy_hypernyms.tsv"
        return cls.from_tsv("toy_hypernyms.tsv", ref.read_text(encoding="utf-8"))

    @property
    def nodes(self) -> List[str]:
        return list(self.parents)

    @property
    def roots(self) -> List[str]:
        return [n for n, ps in self.parents.items() if not ps]

    def __contains__(self, node) -> bool:
        return node in self.parents

    def to_edges(self) -> List[Tuple[str, str]]:
        return [(c, p) for c, ps in self.parents.items() for p in ps]

    def to_tsv(self) -> str:
        return "".join(f"{c}\t{p}\n" for c, p in self.to_edges())

    def with_virtual_root(self, name: str) -> "TaxonomyGraph":
        """Copy with ``name`` added as the parent of every current root."""
        if name in self:
            raise ValidationError(f"virtual root {name!r} already names a node")
        return TaxonomyGraph(self.to_edges() + [(r, name) for r in self.roots])

    def _levels(self) -> Dict[str, int]:
        # Kahn's algorithm doubles as the cycle check.
        indeg = {n: len(ps) for n, ps in self.parents.items()}
        queue = deque(n for n, d in indeg.items() if d == 0)
        depth = {n: 0 for n in queue}
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in self.children[n]:
                depth[c] = min(depth.get(c, depth[n] + 1), depth[n] + 1)
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.parents):
            raise ValidationError("hypernym graph contains a cycle")
        return depth

    def _components(self) -> Dict[str, int]:
        comp: Dict[str, int] = {}
        label = -1
        for start in self.parents:
            if start in comp:
                continue
            label += 1
            stack = [start]
            comp[start] = label
            while stack:
                n = stack.pop()
                for m in self.parents[n] + self.children[n]:
                    if m not in comp:
                        comp[m] = label
                        stack.append(m)
        return comp

    def connected(self, a: str, b: str) -> bool:
        """Whether an undirected hypernym path links ``a`` and ``b``."""
        return self._component[a] == self._component[b]

    def distance(self, a: str, b: str) -> Optional[int]:
        """Undirected shortest-path length, ``None`` when disconnected."""
        if a == b:
            return 0
        if not self.connected(a, b):
            return None
        dist = {a: 0}
        queue = deque([a])
        while queue:
            n = queue.popleft()
            for m in self.parents[n] + self.children[n]:
                if m not in dist:
                    dist[m] = dist[n] + 1
                    if m == b:
                        return dist[m]
                    queue.append(m)
        return None

    def ancestors(self, node: str) -> Dict[str, int]:
        """Every hypernym ancestor (self included) with its upward distance."""
        dist = {node: 0}
        queue = deque([node])
        while queue:
            n = queue.popleft()
            for p in self.parents[n]:
                if p not in dist:
                    dist[p] = dist[n] + 1
                    queue.append(p)
        return dist


def _parse_pairs(text: str, source: str) -> List[Tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not all(f.strip() for f in fields):
            raise ValidationError("expected two tab-separated fields", source, lineno)
        pairs.append((fields[0].strip(), fields[1].strip()))
    return pairs


def load_overrides(path: Union[str, Path]) -> Dict[str, str]:
    return dict(_parse_pairs(Path(path).read_text(encoding="utf-8"), str(path)))


def toy_overrides() -> Dict[str, str]:
    ref = resources.files("objground") / "data" / "toy_overrides.tsv"
    return dict(_parse_pairs(ref.read_text(encoding="utf-8"), "toy_overrides.tsv"))


def resolve(word: str, g: TaxonomyGraph, overrides: Optional[Mapping[str, str]] = None) -> Optional[str]:
    node = (overrides or {}).get(word, word)
    return node if node in g else None


@dataclass
class ClassTree:
    name: str
    node: Optional[str]
    children: List["ClassTree"] = field(default_factory=list)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def names(self) -> List[str]:
        return [t.name for t in self.walk()]

    def to_dict(self) -> dict:
        d = {"name": self.name, "node": self.node}
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassTree":
        return cls(d["name"], d.get("node"), [cls.from_dict(c) for c in d.get("children", [])])

    def outline(self, indent: str = "  ") -> str:
        lines = []

        def emit(t, level):
            lines.append(indent * level + t.name)
            for c in t.children:
                emit(c, level + 1)

        emit(self, 0)
        return "\n".join(lines) + "\n"


def cluster_classes(words: Sequence[str], g: TaxonomyGraph,
                    overrides: Optional[Mapping[str, str]] = None) -> List[List[str]]:
    """Group words that share an undirected hypernym path.

    Words are scanned in order; each joins the first cluster whose
    shallowest member connects to it, otherwise it opens a new cluster.
    Overridden (polysemous) words skip the scan and are appended afterwards
    as singleton clusters. Unresolvable words become singletons in place.
    """
    overrides = dict(overrides or {})
    clusters: List[List[str]] = []
    reps: List[Optional[str]] = []  # node of the shallowest member, first wins ties
    deferred = []
    for w in words:
        if w in overrides:
            deferred.append(w)
            continue
        node = resolve(w, g)
        if node is None:
            log.warning("class %r is not in the hypernym graph; kept as its own cluster", w)
            clusters.append([w])
            reps.append(None)
            continue
        for j, rep in enumerate(reps):
            if rep is not None and g.connected(node, rep):
                clusters[j].append(w)
                if g.depth[node] < g.depth[rep]:
                    reps[j] = node
                break
        else:
            clusters.append([w])
            reps.append(node)
    for w in deferred:
        clusters.append([w])
    return clusters


def construct_tree(cluster: Sequence[str], g: TaxonomyGraph,
                   overrides: Optional[Mapping[str, str]] = None) -> ClassTree:
    """Grow a tree from the first word, hanging each later word under the
    closest (undirected graph distance) node already placed; earlier nodes win ties."""
    if not cluster:
        raise ValueError("cannot build a tree from an empty cluster")
    root = ClassTree(cluster[0], resolve(cluster[0], g, overrides))
    placed = [root]
    for w in cluster[1:]:
        node = resolve(w, g, overrides)
        best, best_d = None, None
        if node is not None:
            for t in placed:
                if t.node is None:
                    continue
                d = g.distance(node, t.node)
                if d is not None and (best_d is None or d < best_d):
                    best, best_d = t, d
        if best is None:
            log.warning("class %r has no path to the tree rooted at %r; skipped", w, root.name)
            continue
        leaf = ClassTree(w, node)
        best.children.append(leaf)
        placed.append(leaf)
    return root


def lowest_common_hypernym(g: TaxonomyGraph, a: str, b: str) -> str:
    """Deepest shared ancestor of two nodes.

    For ``a == b`` the node itself is excluded, giving its nearest hypernym.
    Ties go to the smaller combined distance, then to graph order.
    """
    up_a = g.ancestors(a)
    up_b = g.ancestors(b)
    common = [n for n in g.nodes if n in up_a and n in up_b]
    if a == b:
        common = [n for n in common if n != a]
    if not common:
        raise MergeFailureError(f"{a!r} and {b!r} share no hypernym ancestor")
    order = {n: i for i, n in enumerate(g.nodes)}
    return min(common, key=lambda n: (-g.depth[n], up_a[n] + up_b[n], order[n]))


def combine_trees(tx: ClassTree, ty: ClassTree, g: TaxonomyGraph) -> ClassTree:
    if tx.node is None or ty.node is None:
        raise MergeFailureError(f"tree root {tx.name if tx.node is None else ty.name!r} is not in the graph")
    lca = lowest_common_hypernym(g, tx.node, ty.node)
    if tx.node != ty.node:
        if lca == tx.node:
            return ClassTree(tx.name, tx.node, tx.children + [ty])
        if lca == ty.node:
            return ClassTree(ty.name, ty.node, ty.children + [tx])
    return ClassTree(lca, lca, [tx, ty])


def build_class_tree(clusters: Sequence[Sequence[str]], g: TaxonomyGraph,
                     overrides: Optional[Mapping[str, str]] = None,
                     virtual_root: Optional[str] = None):
    """One tree per cluster, folded left to right with :func:`combine_trees`.

    ``virtual_root`` joins the roots of a multi-rooted graph for the merge
    step only. Clusters whose first word is unresolvable are left out.
    Returns the tree and the ``(root_x, root_y, common_parent)`` merge log.
    """
    merge_graph = g.with_virtual_root(virtual_root) if virtual_root and len(g.roots) > 1 else g
    trees = []
    for c in clusters:
        t = construct_tree(c, g, overrides)
        if t.node is None:
            log.warning("cluster %r has no graph node and is left out of the tree", list(c))
            continue
        trees.append(t)
    if not trees:
        raise MergeFailureError("no resolvable clusters")
    merges = []
    tree = trees[0]
    for t in trees[1:]:
        rx, ry = tree.node, t.node
        tree = combine_trees(tree, t, merge_graph)
        merges.append((rx, ry, lowest_common_hypernym(merge_graph, rx, ry)))
    return tree, merges
