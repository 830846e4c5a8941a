"""Structural predicates over conjunctive queries and ABoxes.

Cycles follow the assertion-level definition: a cycle of length n is a
sequence of n pairwise distinct assertions linking n distinct vertices back to
the start, where each assertion may be traversed in either direction.  Two
distinct assertions on the same unordered vertex pair form a 2-cycle and a
self-loop is a 1-cycle.  A chord is any assertion between two non-consecutive
cycle vertices, regardless of role and direction, so chordality reduces to
induced-cycle detection in the underlying simple graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .errors import ClassViolationError
from .syntax import (
    ABox,
    ConjunctiveQuery,
    cq_to_abox,
    individual_key,
    make_cq,
)


def _key(v):
    return v if isinstance(v, str) else individual_key(v)


# ---------------------------------------------------------------------------
# graph views of an assertion set


def role_edges(abox_or_query):
    if isinstance(abox_or_query, ABox):
        return abox_or_query.role_assertions
    return abox_or_query.role_atoms


def vertices_of(abox_or_query):
    if isinstance(abox_or_query, ABox):
        return abox_or_query.universe
    return abox_or_query.variables


def simple_graph(obj, frozen=frozenset()):
    """Undirected simple graph over the vertices (self-loops dropped)."""
    adj = {v: set() for v in vertices_of(obj) if v not in frozen}
    for _, a, b in role_edges(obj):
        if a != b and a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def pair_assertions(obj):
    """Role assertions grouped by unordered vertex pair (loops keyed by (v,))."""
    groups = {}
    for r, a, b in role_edges(obj):
        key = (a,) if a == b else tuple(sorted((a, b), key=_key))
        groups.setdefault(key, []).append((r, a, b))
    return groups


def assertion_on_cycle(obj, assertion) -> bool:
    """Does the role assertion occur on some cycle (length 1, 2 or >= 3)?"""
    r, a, b = assertion
    if a == b:
        return True
    groups = pair_assertions(obj)
    key = tuple(sorted((a, b), key=_key))
    if len(groups.get(key, ())) >= 2:
        return True
    adj = simple_graph(obj)
    adj[a].discard(b)
    adj[b].discard(a)
    return _connected(adj, a, b)


def _connected(adj, source, target) -> bool:
    if source == target:
        return True
    seen = {source}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w == target:
                return True
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False


def _shortest_path(adj, source, target):
    """Shortest path as a vertex list, deterministic, or None."""
    if source == target:
        return [source]
    prev = {source: None}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in sorted(adj[v], key=_key):
            if w not in prev:
                prev[w] = v
                if w == target:
                    path = [w]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(w)
    return None


def induced_long_cycle_through(obj, vertex, frozen=frozenset()):
    """A chordless cycle of length >= 4 through `vertex`, as a vertex tuple.

    There is one iff some non-adjacent pair u, v of neighbors of `vertex` is
    connected in the graph with the rest of the closed neighborhood removed.
    Returns the shortest such cycle found (deterministic) or None.
    """
    adj = simple_graph(obj, frozen)
    if vertex not in adj:
        return None
    neighbors = sorted(adj[vertex], key=_key)
    best = None
    for i, u in enumerate(neighbors):
        for v in neighbors[i + 1 :]:
            if v in adj[u]:
                continue
            removed = (adj[vertex] | {vertex}) - {u, v}
            sub = {
                w: {x for x in ws if x not in removed}
                for w, ws in adj.items()
                if w not in removed
            }
            path = _shortest_path(sub, u, v)
            if path is None:
                continue
            cycle = tuple([vertex] + path)
            if best is None or len(cycle) < len(best):
                best = cycle
    return best


def _girth_cycle(adj):
    """A shortest simple-graph cycle (length >= 3), deterministic, or None."""
    best = None
    edges = sorted(
        {tuple(sorted((a, b), key=_key)) for a, ws in adj.items() for b in ws},
        key=lambda e: (_key(e[0]), _key(e[1])),
    )
    for a, b in edges:
        sub = {v: set(ws) for v, ws in adj.items()}
        sub[a].discard(b)
        sub[b].discard(a)
        path = _shortest_path(sub, a, b)
        if path is not None and (best is None or len(path) < len(best)):
            best = tuple(path)
    return best


def find_chordless_cycle(obj, n_max, not_all_in=None, frozen=frozenset()):
    """Shortest chordless cycle of length > n_max, as a vertex tuple, or None.

    `frozen` vertices may not occur on the cycle.  With `not_all_in` given
    (the answer individuals), at least one cycle vertex must lie outside it.
    Self-loops count as 1-cycles and doubled vertex pairs as 2-cycles.
    """
    groups = pair_assertions(obj)
    if n_max == 0:
        loops = sorted(
            (k[0] for k in groups if len(k) == 1 and k[0] not in frozen), key=_key
        )
        if loops:
            return (loops[0],)
        pairs = sorted(
            (
                k
                for k, asserts in groups.items()
                if len(k) == 2
                and len(asserts) >= 2
                and not (set(k) & frozen)
            ),
            key=lambda k: (_key(k[0]), _key(k[1])),
        )
        if pairs:
            return pairs[0]
        return _girth_cycle(simple_graph(obj, frozen))
    # n_max == 3: chordless cycles of length >= 4 through an eligible vertex
    best = None
    for x in sorted(vertices_of(obj), key=_key):
        if x in frozen or (not_all_in is not None and x in not_all_in):
            continue
        cycle = induced_long_cycle_through(obj, x, frozen)
        if cycle is not None and (best is None or len(cycle) < len(best)):
            best = cycle
    return best


# ---------------------------------------------------------------------------
# query predicates


@dataclass(frozen=True)
class CyclePath:
    vertices: tuple
    assertions: tuple  # (role, subject, object) in traversal order


def _atom_key(atom):
    return (atom[0],) + tuple(_key(v) for v in atom[1:])


def _witness_assertions(obj, cycle):
    groups = pair_assertions(obj)
    out = []
    n = len(cycle)
    for i in range(n):
        a, b = cycle[i], cycle[(i + 1) % n]
        key = (a,) if a == b else tuple(sorted((a, b), key=_key))
        out.append(min(groups[key], key=_atom_key))
    return CyclePath(tuple(cycle), tuple(out))


def chordless_cycle_witness(q: ConjunctiveQuery):
    """A chordless cycle of length >= 4 through a quantified variable, or None."""
    for x in sorted(q.quantified_variables(), key=_key):
        cycle = induced_long_cycle_through(q, x)
        if cycle is not None:
            return _witness_assertions(q, cycle)
    return None


def is_chordal(q: ConjunctiveQuery) -> bool:
    """Every cycle of length >= 4 with at least one quantified variable has a chord."""
    return chordless_cycle_witness(q) is None


def symmetry_witness(q: ConjunctiveQuery, strong=False):
    """A violating triple (r(y1,x), r(y2,x), x) or None.

    In the plain variant a self-loop on x, y1 or y2 excuses the symmetry;
    the strong variant drops that escape.
    """
    answer = q.answer_variables()
    loops = {x for r, x, y in q.role_atoms if x == y}
    incoming = {}
    for r, y, x in q.role_atoms:
        incoming.setdefault((r, x), []).append((r, y, x))
    for (r, x), atoms in sorted(incoming.items(), key=lambda t: (t[0][0], _key(t[0][1]))):
        if x in answer or len(atoms) < 2:
            continue
        atoms = sorted(atoms, key=_atom_key)
        for i, a1 in enumerate(atoms):
            for a2 in atoms[i + 1 :]:
                if a1[1] == a2[1]:
                    continue
                if not strong and ({x, a1[1], a2[1]} & loops):
                    continue
                if assertion_on_cycle(q, a1) or assertion_on_cycle(q, a2):
                    continue
                return (a1, a2, x)
    return None


def is_symmetry_free(q: ConjunctiveQuery) -> bool:
    return symmetry_witness(q) is None


def is_strongly_symmetry_free(q: ConjunctiveQuery) -> bool:
    return symmetry_witness(q, strong=True) is None


def is_csf(q: ConjunctiveQuery) -> bool:
    return is_chordal(q) and is_symmetry_free(q)


def to_strongly_symmetry_free(q: ConjunctiveQuery) -> ConjunctiveQuery:
    """Equivalent strongly symmetry-free query for q in CQ^csf.

    Every quantified variable carrying a self-loop gets a fresh copy with the
    same concept atoms and with every incident role atom duplicated onto the
    copy (substituting in the slot the original occupied).
    """
    if not is_csf(q):
        raise ClassViolationError("input query is not chordal and symmetry-free")
    answer = q.answer_variables()
    loop_vars = sorted(
        {x for r, x, y in q.role_atoms if x == y and x not in answer}, key=_key
    )
    concept_atoms = set(q.concept_atoms)
    role_atoms = set(q.role_atoms)
    for x in loop_vars:
        copy = _fresh_var(q, x)
        concept_atoms.update((n, copy) for n, v in q.concept_atoms if v == x)
        for r, a, b in q.role_atoms:
            if b == x:
                role_atoms.add((r, a, copy))
            if a == x:
                role_atoms.add((r, copy, b))
    return make_cq(q.head, concept_atoms, role_atoms, q.variables)


def _fresh_var(q, base):
    stem = base if isinstance(base, str) else base.spell()
    k = 1
    while f"{stem}_dup{k}" in q.variables:
        k += 1
    return f"{stem}_dup{k}"


# ---------------------------------------------------------------------------
# classification


def _is_undirected_tree(q: ConjunctiveQuery) -> bool:
    groups = pair_assertions(q)
    if any(len(k) == 1 for k in groups):
        return False
    if any(len(asserts) > 1 for asserts in groups.values()):
        return False
    if len(groups) != len(q.variables) - 1:
        return False
    adj = simple_graph(q)
    start = next(iter(adj))
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(q.variables)


def _is_ditree_rooted_at(q: ConjunctiveQuery, root) -> bool:
    if not _is_undirected_tree(q):
        return False
    indeg = {v: 0 for v in q.variables}
    for _, a, b in q.role_atoms:
        indeg[b] += 1
    if indeg[root] != 0:
        return False
    return all(indeg[v] == 1 for v in q.variables if v != root)


def _eliq_symmetry_pattern(q: ConjunctiveQuery) -> bool:
    """The ex r.(C and ex r-.D) pattern: r(z,y), r(z',y), z != z', y quantified."""
    answer = q.answer_variables()
    incoming = {}
    for r, z, y in q.role_atoms:
        incoming.setdefault((r, y), set()).add(z)
    return any(
        len(zs) >= 2 and y not in answer for (r, y), zs in incoming.items()
    )


@dataclass(frozen=True)
class QueryClass:
    label: str  # "ELQ" | "ELIQ-sf" | "CQ-csf" | "CQ"
    width: int | None = None  # arity, for CQ-csf
    witness: object = None  # violation witness when label == "CQ"

    def describe(self) -> str:
        if self.label == "CQ-csf":
            return f"CQ-csf_{self.width}"
        return self.label


def classify_query(q: ConjunctiveQuery) -> QueryClass:
    """Most specific of ELQ, ELIQ-sf, CQ-csf (with arity) and plain CQ."""
    if q.arity == 1 and _is_ditree_rooted_at(q, q.head[0]):
        return QueryClass("ELQ")
    if q.arity == 1 and _is_undirected_tree(q) and not _eliq_symmetry_pattern(q):
        return QueryClass("ELIQ-sf")
    witness = chordless_cycle_witness(q)
    if witness is None:
        witness = symmetry_witness(q)
        if witness is None:
            return QueryClass("CQ-csf", width=q.arity)
    return QueryClass("CQ", witness=witness)


def query_in_class(q: ConjunctiveQuery, class_name: str) -> bool:
    got = classify_query(q)
    if class_name == "elq":
        return got.label == "ELQ"
    if class_name == "eliq-sf":
        return got.label in ("ELQ", "ELIQ-sf")
    if class_name == "cq-csf":
        return got.label in ("ELQ", "ELIQ-sf", "CQ-csf")
    if class_name == "cq":
        return True
    raise ValueError(f"unknown query class {class_name!r}")


# ---------------------------------------------------------------------------
# reachability partition


def answer_reachable_partition(q: ConjunctiveQuery):
    """Split atoms by directed reachability from the answer variables.

    Returns (reachable_atoms, boolean_atoms) where concept atoms are pairs and
    role atoms triples; an atom is reachable iff it mentions a variable that
    is reachable from an answer variable in the digraph of role atoms.
    """
    reached = set(q.head)
    changed = True
    while changed:
        changed = False
        for _, a, b in q.role_atoms:
            if a in reached and b not in reached:
                reached.add(b)
                changed = True
    reachable, boolean = set(), set()
    for atom in q.concept_atoms:
        (reachable if atom[1] in reached else boolean).add(atom)
    for atom in q.role_atoms:
        (reachable if atom[1] in reached or atom[2] in reached else boolean).add(atom)
    return frozenset(reachable), frozenset(boolean)
