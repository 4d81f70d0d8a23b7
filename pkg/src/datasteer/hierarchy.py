"""Agglomerative label hierarchy, degree-of-interest scoring, and the
budgeted tree cut that decides which content labels a view displays.

Clustering is average-linkage on cosine distances between label embeddings,
with lexicographic tie-breaking so rebuilds are reproducible. Interest of a
node is its generated/original imbalance (labels that only ever show up in
generated images are exactly the ones worth a look) discounted by tree
distance from the focused node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, GENERATED, LabelRecord, ORIGINAL
from .errors import UnknownNode

API_SMOOTHING = 1  # denominator when a node has no original images


@dataclass(frozen=True)
class TreeNode:
    id: str
    name: str
    children: tuple[str, ...]         # empty for leaves
    members: tuple[str, ...]          # label ids, sorted
    centroid: tuple[float, ...]
    original_count: int = 0
    generated_count: int = 0
    label_id: str | None = None       # set on leaves
    name_flagged: bool = False        # provider naming failed

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class LabelTree:
    nodes: Mapping[str, TreeNode]
    root_id: str
    parents: Mapping[str, str]

    def node(self, node_id: str) -> TreeNode:
        if node_id not in self.nodes:
            raise UnknownNode(f"no node '{node_id}'")
        return self.nodes[node_id]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def depth_of(self, node_id: str) -> int:
        self.node(node_id)
        d = 0
        cur = node_id
        while cur != self.root_id:
            cur = self.parents[cur]
            d += 1
        return d

    def tree_distance(self, a: str, b: str) -> int:
        """Unweighted path length between two nodes."""
        self.node(a), self.node(b)
        ancestors = {}
        cur, d = a, 0
        while True:
            ancestors[cur] = d
            if cur == self.root_id:
                break
            cur = self.parents[cur]
            d += 1
        cur, d = b, 0
        while cur not in ancestors:
            cur = self.parents[cur]
            d += 1
        return d + ancestors[cur]

    def is_ancestor(self, anc: str, node_id: str) -> bool:
        cur = node_id
        while cur != self.root_id:
            cur = self.parents[cur]
            if cur == anc:
                return True
        return False

    def to_nested_dict(self, node_id: str | None = None) -> dict:
        node = self.node(node_id or self.root_id)
        out = {
            "id": node.id, "name": node.name, "members": list(node.members),
            "original_count": node.original_count,
            "generated_count": node.generated_count,
        }
        if node.children:
            out["children"] = [self.to_nested_dict(c) for c in node.children]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_nested_dict(), indent=2)


@dataclass(frozen=True)
class TreeCut:
    node_ids: frozenset
    focus: str


def _cosine_dist(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        return 1.0
    return float(1.0 - (u @ v) / (nu * nv))


def build_hierarchy(labels: Sequence[LabelRecord], corpus: Corpus | None = None) -> LabelTree:
    """Average-linkage agglomerative tree over label embeddings.

    Ties are resolved toward the lexicographically smallest pair of cluster
    anchors, so the result does not depend on input order. With a corpus the
    per-node original/generated image counts (union over member labels) are
    filled in.
    """
    labels = sorted(labels, key=lambda la: la.id)
    if not labels:
        raise ValueError("need at least one label")

    orig_sets: dict[str, set] = {}
    gen_sets: dict[str, set] = {}
    if corpus is not None:
        kind_of = {im.id: im.kind for im in corpus.images}
        for la in labels:
            members = corpus.images_of(la.id)
            orig_sets[la.id] = {i for i in members if kind_of[i] == ORIGINAL}
            gen_sets[la.id] = {i for i in members if kind_of[i] == GENERATED}
    else:
        for la in labels:
            orig_sets[la.id] = set()
            gen_sets[la.id] = set()

    nodes: dict[str, TreeNode] = {}
    parents: dict[str, str] = {}
    # active cluster: anchor (min member id) -> (node_id, members, size, centroid)
    active: dict[str, tuple[str, tuple[str, ...], int, np.ndarray]] = {}
    for la in labels:
        emb = np.asarray(la.embedding, dtype=float)
        nodes[la.id] = TreeNode(
            id=la.id, name=la.text, children=(), members=(la.id,),
            centroid=tuple(emb), label_id=la.id,
            original_count=len(orig_sets[la.id]), generated_count=len(gen_sets[la.id]))
        active[la.id] = (la.id, (la.id,), 1, emb)

    dist: dict[tuple[str, str], float] = {}
    anchors = sorted(active)
    for i, a in enumerate(anchors):
        for b in anchors[i + 1:]:
            dist[(a, b)] = _cosine_dist(active[a][3], active[b][3])

    def pair_key(a, b):
        return (a, b) if a < b else (b, a)

    counter = 0
    image_sets: dict[str, tuple[set, set]] = {
        la.id: (orig_sets[la.id], gen_sets[la.id]) for la in labels}

    while len(active) > 1:
        (a, b) = min(dist, key=lambda ab: (dist[ab], ab))
        dist.pop((a, b))
        node_a, members_a, size_a, cen_a = active.pop(a)
        node_b, members_b, size_b, cen_b = active.pop(b)
        merged_members = tuple(sorted(members_a + members_b))
        merged_size = size_a + size_b
        centroid = (size_a * cen_a + size_b * cen_b) / merged_size
        new_id = f"n{counter}"
        counter += 1
        o_a, g_a = image_sets[node_a]
        o_b, g_b = image_sets[node_b]
        o_m, g_m = o_a | o_b, g_a | g_b
        image_sets[new_id] = (o_m, g_m)
        nodes[new_id] = TreeNode(
            id=new_id, name=new_id, children=(node_a, node_b),
            members=merged_members,
            centroid=tuple(centroid),
            original_count=len(o_m), generated_count=len(g_m))
        parents[node_a] = new_id
        parents[node_b] = new_id

        anchor = min(a, b)
        for other in list(active):
            key_a = pair_key(a, other)
            key_b = pair_key(b, other)
            d_new = (size_a * dist.pop(key_a) + size_b * dist.pop(key_b)) / merged_size
            dist[pair_key(anchor, other)] = d_new
        active[anchor] = (new_id, merged_members, merged_size, centroid)

    root_id = next(iter(active.values()))[0]
    return LabelTree(nodes=nodes, root_id=root_id, parents=parents)


def api_score(node: TreeNode) -> float:
    """Generated/original imbalance; an absent-original denominator falls
    back to the smoothing constant so brand-new content stays finite but
    maximal."""
    denom = node.original_count if node.original_count > 0 else API_SMOOTHING
    return node.generated_count / denom


def doi(tree: LabelTree, node_id: str, focus_id: str) -> float:
    """Interest of `node_id` relative to the focused node (raw scale)."""
    node = tree.node(node_id)
    tree.node(focus_id)
    return api_score(node) - tree.tree_distance(node_id, focus_id)


def tree_cut(tree: LabelTree, focus: str, budget: int) -> TreeCut:
    """Greedy antichain cover: repeatedly expand the cut node with the
    highest interest until the budget is filled.

    The imbalance term is min-max rescaled onto [0, max tree distance] so it
    is commensurable with the distance discount; the rescaling is monotone,
    so relative interest order is unchanged.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    tree.node(focus)

    apis = {nid: api_score(n) for nid, n in tree.nodes.items()}
    lo, hi = min(apis.values()), max(apis.values())
    td = {nid: tree.tree_distance(nid, focus) for nid in tree.nodes}
    scale = max(td.values()) or 1

    def scaled_doi(nid: str) -> float:
        if hi > lo:
            a = (apis[nid] - lo) / (hi - lo) * scale
        else:
            a = 0.0
        return a - td[nid]

    cut = {tree.root_id}
    while len(cut) < budget:
        expandable = [nid for nid in cut if tree.nodes[nid].children]
        if not expandable:
            break
        # highest interest first; ties go to the lexicographically smallest id
        best = min(expandable, key=lambda nid: (-scaled_doi(nid), nid))
        cut.remove(best)
        cut.update(tree.nodes[best].children)
    return TreeCut(node_ids=frozenset(cut), focus=focus)


def is_antichain_cover(tree: LabelTree, cut: TreeCut) -> bool:
    """True iff no cut node is an ancestor of another and the member sets
    cover every label exactly once."""
    ids = sorted(cut.node_ids)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if tree.is_ancestor(a, b) or tree.is_ancestor(b, a):
                return False
    covered: list[str] = []
    for nid in ids:
        covered.extend(tree.nodes[nid].members)
    all_labels = sorted(tree.nodes[tree.root_id].members)
    return sorted(covered) == all_labels


def name_nodes(tree: LabelTree, naming_provider, frequencies: Mapping[str, int] | None = None) -> LabelTree:
    """Fill inner-node names from the provider; on failure the node keeps its
    id as a placeholder and is flagged."""
    freqs = dict(frequencies or {})
    label_text = {n.label_id: n.name for n in tree.leaves()}
    new_nodes = dict(tree.nodes)
    for nid, node in tree.nodes.items():
        if node.is_leaf:
            continue
        members = [(label_text[m], freqs.get(m, 0)) for m in node.members]
        try:
            name = naming_provider.name_group(members)
            new_nodes[nid] = replace(node, name=name, name_flagged=False)
        except Exception:
            new_nodes[nid] = replace(node, name=nid, name_flagged=True)
    return LabelTree(nodes=new_nodes, root_id=tree.root_id, parents=tree.parents)
