import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from objground.errors import MergeFailureError, ValidationError
from objground.taxonomy import (
    ClassTree,
    TaxonomyGraph,
    build_class_tree,
    cluster_classes,
    combine_trees,
    construct_tree,
    lowest_common_hypernym,
    toy_overrides,
)

G = TaxonomyGraph.toy()
OVR = toy_overrides()


def shape(tree):
    """Nested (name, [children]) tuples for compact comparisons."""
    return (tree.name, [shape(c) for c in tree.children])


def walk_up(edges, node):
    """Every ancestor of ``node`` (itself included) by explicit parent-chain walk."""
    parents = {}
    for c, p in edges:
        parents.setdefault(c, []).append(p)
    seen, stack = set(), [node]
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(parents.get(n, []))
    return seen


def test_toy_graph_shape():
    assert len(G.nodes) == 60
    assert G.roots == ["animal", "artifact", "food", "plant"]
    assert G.depth["dog"] == 4 and G.depth["animal"] == 0 and G.depth["rose"] == 2
    assert G.distance("dog", "cat") == 4
    assert G.distance("dog", "car") is None
    assert G.connected("apple", "tea") and not G.connected("apple", "oak")


def test_cycle_and_parse_errors():
    with pytest.raises(ValidationError):
        TaxonomyGraph([("a", "b"), ("b", "a")])
    with pytest.raises(ValidationError) as exc:
        TaxonomyGraph.from_tsv("edges.tsv", "a\tb\nbroken line\n")
    assert "edges.tsv:2" in str(exc.value)


def test_tsv_round_trip_and_virtual_root():
    again = TaxonomyGraph.from_tsv("x", G.to_tsv())
    assert again.to_edges() == G.to_edges()
    v = G.with_virtual_root("entity")
    assert v.roots == ["entity"]
    assert v.depth["dog"] == 5
    with pytest.raises(ValidationError):
        G.with_virtual_root("dog")


def test_cluster_examples():
    assert cluster_classes(["dog", "cat"], G) == [["dog", "cat"]]
    assert cluster_classes(["dog", "car"], G) == [["dog"], ["car"]]
    assert cluster_classes(["rose"], G) == [["rose"]]
    assert cluster_classes([], G) == []


def test_cluster_mixed_with_override_and_unknown():
    words = ["dog", "apple", "cat", "car", "banana", "rose", "cup", "tea", "unicorn"]
    assert cluster_classes(words, G, OVR) == [
        ["dog", "cat"], ["apple", "tea"], ["car", "cup"], ["rose"], ["unicorn"], ["banana"]]


def test_construct_tree_examples():
    assert shape(construct_tree(["rose"], G)) == ("rose", [])
    assert shape(construct_tree(["dog", "cat"], G)) == ("dog", [("cat", [])])
    # wolf is 2 from dog; lion is 2 from cat; horse is 4 from everyone -> earliest (dog)
    tree = construct_tree(["dog", "cat", "wolf", "lion", "horse"], G)
    assert shape(tree) == ("dog", [("cat", [("lion", [])]), ("wolf", []), ("horse", [])])
    parent = construct_tree(["dog", "canine"], G)
    assert shape(parent) == ("dog", [("canine", [])])
    assert G.distance("dog", "canine") == 1


def test_construct_tree_skips_disconnected():
    assert shape(construct_tree(["dog", "car"], G)) == ("dog", [])
    with pytest.raises(ValueError):
        construct_tree([], G)


@pytest.mark.parametrize("a,b,expected", [
    ("dog", "cat", "mammal"),
    ("dog", "wolf", "canine"),
    ("dog", "dog", "canine"),
    ("dog", "bee", "animal"),
    ("dog", "canine", "canine"),
    ("apple", "carrot", "food"),
])
def test_lowest_common_hypernym(a, b, expected):
    assert lowest_common_hypernym(G, a, b) == expected


def test_lca_failure_across_roots():
    with pytest.raises(MergeFailureError):
        lowest_common_hypernym(G, "dog", "car")
    assert lowest_common_hypernym(G.with_virtual_root("entity"), "dog", "car") == "entity"


def test_combine_trees_examples():
    dog, cat = ClassTree("dog", "dog"), ClassTree("cat", "cat")
    assert shape(combine_trees(dog, cat, G)) == ("mammal", [("dog", []), ("cat", [])])
    same = combine_trees(dog, ClassTree("dog2", "dog"), G)
    assert shape(same) == ("canine", [("dog", []), ("dog2", [])])
    under = combine_trees(dog, ClassTree("canine", "canine"), G)
    assert shape(under) == ("canine", [("dog", [])])
    with pytest.raises(MergeFailureError):
        combine_trees(ClassTree("x", None), dog, G)


def test_build_class_tree_single_root_component():
    tree, merges = build_class_tree([["cup"], ["guitar"], ["chair"]], G)
    assert shape(tree) == ("artifact", [("cup", []), ("guitar", []), ("chair", [])])
    assert merges == [("cup", "guitar", "artifact"), ("artifact", "chair", "artifact")]


def test_build_class_tree_with_virtual_root():
    words = ["dog", "apple", "cat", "car", "banana", "rose", "cup", "tea", "unicorn"]
    clusters = cluster_classes(words, G, OVR)
    with pytest.raises(MergeFailureError):
        build_class_tree(clusters, G, OVR)
    tree, merges = build_class_tree(clusters, G, OVR, virtual_root="entity")
    assert shape(tree) == ("entity", [
        ("dog", [("cat", [])]), ("apple", [("tea", [])]), ("car", [("cup", [])]),
        ("rose", []), ("banana", [])])
    assert merges[0] == ("dog", "apple", "entity")
    assert [m[1] for m in merges] == ["apple", "car", "rose", "banana_fruit"]
    edges = G.with_virtual_root("entity").to_edges()
    for rx, ry, r in merges:
        assert r in walk_up(edges, rx) and r in walk_up(edges, ry)


def test_class_tree_serialization():
    tree, _ = build_class_tree([["dog", "cat", "wolf"]], G)
    assert ClassTree.from_dict(tree.to_dict()) == tree
    assert tree.outline() == "dog\n  cat\n  wolf\n"


leaves = [n for n in G.nodes if not G.children[n]]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(leaves), min_size=1, max_size=12, unique=True))
def test_clusters_partition_and_trees_cover_clusters(words):
    clusters = cluster_classes(words, G)
    flat = [w for c in clusters for w in c]
    assert sorted(flat) == sorted(words)
    assert clusters == cluster_classes(words, G)
    for c in clusters:
        assert sorted(construct_tree(c, G).names()) == sorted(c)
    tree, merges = build_class_tree(clusters, G, virtual_root="entity")
    assert set(words) <= set(tree.names())
    edges = G.with_virtual_root("entity").to_edges()
    for rx, ry, r in merges:
        up_x, up_y = walk_up(edges, rx), walk_up(edges, ry)
        assert r in up_x and r in up_y
        # No shared ancestor is strictly deeper than the reported one.
        common = (up_x & up_y) - ({rx} if rx == ry else set())
        depth = G.with_virtual_root("entity").depth
        assert depth[r] == max(depth[n] for n in common)
