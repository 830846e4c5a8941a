"""Reasoning under ELdr ontologies in normal form.

Provides entailment between concept-name conjunctions (a completion procedure
over "types", i.e. closed sets of concept names), ABox saturation, bounded
unravelings of the universal model (chase), the 3-compact model, direct
products, homomorphism search, certain-answer checks and CQ containment.

Anonymous elements are structured: `Compact` nodes of the 3-compact model,
`Trace` nodes of the chase, `Pair` nodes of products, `Copy` nodes minted by
the refinement steps.  Any hashable individual works as an element; ordering
is by spelling.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property

from .errors import ArityError, NotNormalFormError
from .syntax import (
    ABox,
    And,
    Concept,
    ConceptInclusion,
    Exists,
    Name,
    Named,
    Ontology,
    Top,
    TOP,
    TOP_NAME,
    individual_key,
    make_abox,
)

Interpretation = ABox


# ---------------------------------------------------------------------------
# structured elements


@dataclass(frozen=True)
class Compact:
    """3-compact model node c_{a,i,r,C}."""

    base: object
    idx: int
    role: str
    filler: Concept

    def spell(self):
        return f"c[{self.base.spell()},{self.idx},{self.role},{self.filler.text()}]"


@dataclass(frozen=True)
class Trace:
    """Chase node: a named individual followed by (role, filler) steps."""

    base: object
    steps: tuple  # of (role_name, Concept)

    def spell(self):
        inner = ";".join(f"{r},{c.text()}" for r, c in self.steps)
        return f"t[{self.base.spell()};{inner}]"

    def extend(self, role, filler) -> "Trace":
        return Trace(self.base, self.steps + ((role, filler),))


def trace_extend(element, role, filler) -> Trace:
    if isinstance(element, Trace):
        return element.extend(role, filler)
    return Trace(element, ((role, filler),))


@dataclass(frozen=True)
class Pair:
    left: object
    right: object

    def spell(self):
        return f"p[{self.left.spell()}|{self.right.spell()}]"


@dataclass(frozen=True)
class Copy:
    base: object
    serial: int

    def spell(self):
        return f"cp[{self.base.spell()},{self.serial}]"


# ---------------------------------------------------------------------------
# completion over concept-name types


def _filler_name(c: Concept) -> str:
    return TOP_NAME if isinstance(c, Top) else c.name


class Reasoner:
    """Completion-based reasoner for one normal-form ELdr ontology.

    Types are frozensets of concept names (top is implicit).  The closure of
    a type is the set of all concept names it is subsumed by under the
    ontology; it is computed by a joint fixpoint with the closures of all
    "successor types" {B} ∪ range(r) that existential right-hand sides can
    create, so consequences flowing back from the anonymous part are caught.
    """

    def __init__(self, ontology: Ontology):
        if not ontology.is_normal_form:
            raise NotNormalFormError(
                "reasoning requires a normal-form ELdr ontology; normalize first"
            )
        self.ontology = ontology
        self.conj_rules = []  # (frozenset of lhs names, rhs name)
        self.exists_rhs = []  # (lhs name or top, role, filler name or top)
        self.exists_lhs = []  # (role, filler name or top, rhs name)
        self.ranges = {}  # role -> set of names
        for ci in ontology.cis:
            lhs, rhs = ci.lhs, ci.rhs
            if ci.is_range_restriction():
                if not isinstance(rhs, Top):
                    self.ranges.setdefault(lhs.role.name, set()).add(rhs.name)
                continue
            if isinstance(rhs, Exists):
                self.exists_rhs.append(
                    (_filler_name(lhs), rhs.role.name, _filler_name(rhs.filler))
                )
            elif isinstance(lhs, Exists):
                if not isinstance(rhs, Top):
                    self.exists_lhs.append(
                        (lhs.role.name, _filler_name(lhs.filler), rhs.name)
                    )
            else:
                names = frozenset(
                    p.name for p in (lhs.parts if isinstance(lhs, And) else (lhs,))
                    if isinstance(p, Name)
                )
                if not isinstance(rhs, Top):
                    self.conj_rules.append((names, rhs.name))
        self.role_names = ontology.role_names()
        fillers = [c for c in ontology.sub_concepts if isinstance(c, (Name, Top))]
        self.fillers = sorted(fillers, key=lambda c: c.text())
        self._closure_memo = {}
        self._lock = threading.Lock()
        self._succ_closure = self._fix_successor_types()

    # -- core fixpoint ----------------------------------------------------

    def range_names(self, role) -> frozenset:
        return frozenset(self.ranges.get(role, ()))

    def _succ_seed(self, filler_name, role):
        seed = set(self.range_names(role))
        if filler_name != TOP_NAME:
            seed.add(filler_name)
        return frozenset(seed)

    def _apply_rules(self, names: set, succ_closure) -> bool:
        changed = False
        for lhs_names, rhs in self.conj_rules:
            if rhs not in names and lhs_names <= names:
                names.add(rhs)
                changed = True
        for lhs_name, role, filler in self.exists_rhs:
            if lhs_name != TOP_NAME and lhs_name not in names:
                continue
            child = succ_closure.get((filler, role))
            if child is None:
                continue
            for role2, filler2, rhs in self.exists_lhs:
                if role2 == role and rhs not in names:
                    if filler2 == TOP_NAME or filler2 in child:
                        names.add(rhs)
                        changed = True
        return changed

    def _fix_successor_types(self):
        keys = [
            (_filler_name(f), r) for f in self.fillers for r in self.role_names
        ]
        table = {k: set(self._succ_seed(*k)) for k in keys}
        changed = True
        while changed:
            changed = False
            for k in keys:
                if self._apply_rules(table[k], table):
                    changed = True
        return {k: frozenset(v) for k, v in table.items()}

    def closure(self, names) -> frozenset:
        """All concept names entailed by the conjunction of `names` (top dropped)."""
        key = frozenset(n for n in names if n != TOP_NAME)
        with self._lock:
            hit = self._closure_memo.get(key)
        if hit is not None:
            return hit
        out = set(key)
        while self._apply_rules(out, self._succ_closure):
            pass
        result = frozenset(out)
        with self._lock:
            self._closure_memo[key] = result
        return result

    def successor_type(self, filler_name, role) -> frozenset:
        """Closure of the type of an r-successor created with the given filler."""
        got = self._succ_closure.get((filler_name, role))
        if got is None:
            got = self.closure(self._succ_seed(filler_name, role))
        return got

    # -- entailment judgments ---------------------------------------------

    def entails_name(self, type_names, rhs_name) -> bool:
        if rhs_name == TOP_NAME:
            return True
        return rhs_name in self.closure(type_names)

    def entailed_successor_fillers(self, type_names, role):
        """Filler names B with some A <= ex role.B applicable to the type."""
        cl = self.closure(type_names)
        out = set()
        for lhs_name, r, filler in self.exists_rhs:
            if r == role and (lhs_name == TOP_NAME or lhs_name in cl):
                out.add(filler)
        return sorted(out)

    def entails_exists(self, type_names, role, filler_concept: Concept) -> bool:
        """O |= (conj of type_names) <= ex role.filler, filler a name or top."""
        want = _filler_name(filler_concept) if isinstance(filler_concept, Concept) else filler_concept
        for b in self.entailed_successor_fillers(type_names, role):
            if want == TOP_NAME or want in self.successor_type(b, role):
                return True
        return False

    def entails_concept(self, type_names, concept: Concept) -> bool:
        """O |= (conj of type_names) <= concept, for an arbitrary EL concept."""
        if isinstance(concept, Top):
            return True
        if isinstance(concept, Name):
            return self.entails_name(type_names, concept.name)
        if isinstance(concept, And):
            return all(self.entails_concept(type_names, p) for p in concept.parts)
        if isinstance(concept, Exists):
            if concept.role.inverted:
                return False
            role = concept.role.name
            for b in self.entailed_successor_fillers(type_names, role):
                if self.entails_concept(self.successor_type(b, role), concept.filler):
                    return True
            return False
        raise TypeError(concept)  # pragma: no cover

    # -- ABox-level saturation ---------------------------------------------

    def saturated_labels(self, abox: ABox) -> dict:
        """Entailed concept names per named individual (range + role rules)."""
        labels = {a: set(abox.labels(a)) for a in abox.universe}
        for r, _, b in abox.role_assertions:
            labels[b].update(self.range_names(r))
        changed = True
        while changed:
            changed = False
            for a in labels:
                cl = self.closure(labels[a])
                if not cl <= labels[a]:
                    labels[a].update(cl)
                    changed = True
            for role, filler, rhs in self.exists_lhs:
                for r, a, b in abox.role_assertions:
                    if r != role or rhs in labels[a]:
                        continue
                    if filler == TOP_NAME or filler in labels[b]:
                        labels[a].add(rhs)
                        changed = True
        return {a: frozenset(v) for a, v in labels.items()}

    def entails_exists_at(self, abox, labels, individual, role, filler) -> bool:
        """A,O |= ex role.filler(individual), filler a name or top."""
        want = _filler_name(filler)
        for b in abox.successors(role, individual):
            if want == TOP_NAME or want in labels[b]:
                return True
        return self.entails_exists(labels[individual], role, want_concept(want))


def want_concept(name) -> Concept:
    return TOP if name == TOP_NAME else Name(name)


_REASONERS = {}
_REASONER_LOCK = threading.Lock()


def reasoner_for(ontology: Ontology) -> Reasoner:
    with _REASONER_LOCK:
        r = _REASONERS.get(ontology)
    if r is None:
        r = Reasoner(ontology)
        with _REASONER_LOCK:
            _REASONERS.setdefault(ontology, r)
    return r


# ---------------------------------------------------------------------------
# spec-level operations


def entails_ci(ontology: Ontology, lhs_names, rhs_name) -> bool:
    """O |= (conj of lhs names) <= rhs concept name (top allowed on either side)."""
    return reasoner_for(ontology).entails_name(frozenset(lhs_names), rhs_name)


def range_conjunct(ontology: Ontology, role) -> frozenset:
    """Concept names A with ex role-.top <= A in O; empty set denotes top."""
    return reasoner_for(ontology).range_names(role)


def saturate(abox: ABox, ontology: Ontology) -> ABox:
    """Least superset of the ABox closed under entailed concept-name assertions."""
    r = reasoner_for(ontology)
    labels = r.saturated_labels(abox)
    concept_assertions = set(abox.concept_assertions)
    for a, names in labels.items():
        concept_assertions.update((n, a) for n in names)
    return make_abox(concept_assertions, abox.role_assertions, abox.extra_individuals)


def build_chase(abox: ABox, ontology: Ontology, depth: int) -> Interpretation:
    """Restriction of the universal model to traces of length <= depth.

    Trace steps (r, C) require ex r.C in sub(O); the first step additionally
    requires A,O |= ex r.C(a) and later ones O |= C' ⊓ range(r') <= ex r.C.
    """
    r = reasoner_for(ontology)
    steps = sorted(
        {
            (c.role.name, c.filler)
            for c in ontology.sub_concepts
            if isinstance(c, Exists) and not c.role.inverted
        },
        key=lambda t: (t[0], t[1].text()),
    )
    labels = r.saturated_labels(abox)
    concept_assertions = set(abox.concept_assertions)
    role_assertions = set(abox.role_assertions)
    for a, names in labels.items():
        concept_assertions.update((n, a) for n in names)

    frontier = []
    for a in sorted(abox.universe, key=individual_key):
        for role, filler in steps:
            if r.entails_exists_at(abox, labels, a, role, filler):
                frontier.append((Trace(a, ((role, filler),)), a))
    level = 1
    while level <= depth and frontier:
        next_frontier = []
        for trace, parent in frontier:
            role, filler = trace.steps[-1]
            role_assertions.add((role, parent, trace))
            node_type = r.successor_type(_filler_name(filler), role)
            for name in node_type:
                concept_assertions.add((name, trace))
            if not node_type:
                concept_assertions.add((TOP_NAME, trace))
            if level < depth:
                for role2, filler2 in steps:
                    if r.entails_exists(node_type, role2, filler2):
                        next_frontier.append((trace.extend(role2, filler2), trace))
        frontier = next_frontier
        level += 1
    return make_abox(concept_assertions, role_assertions, abox.extra_individuals)


def build_compact3(abox: ABox, ontology: Ontology) -> Interpretation:
    """The 3-compact model: anonymous nodes c_{a,i,r,C} with i+1 wrapping 4->1.

    Only nodes reachable from the named part are materialized; fillers range
    over the concept names of sub(O) (and top when it occurs there).
    """
    r = reasoner_for(ontology)
    labels = r.saturated_labels(abox)
    concept_assertions = set(abox.concept_assertions)
    role_assertions = set(abox.role_assertions)
    for a, names in labels.items():
        concept_assertions.update((n, a) for n in names)

    frontier = []
    for a in sorted(abox.universe, key=individual_key):
        for role in r.role_names:
            for filler in r.fillers:
                if r.entails_exists_at(abox, labels, a, role, filler):
                    node = Compact(a, 0, role, filler)
                    role_assertions.add((role, a, node))
                    frontier.append(node)
    seen = set(frontier)
    while frontier:
        node = frontier.pop()
        node_type = r.successor_type(_filler_name(node.filler), node.role)
        for name in node_type:
            concept_assertions.add((name, node))
        if not node_type:
            concept_assertions.add((TOP_NAME, node))
        nxt = (node.idx % 4) + 1
        for role in r.role_names:
            for filler in r.fillers:
                if r.entails_exists(node_type, role, filler):
                    child = Compact(node.base, nxt, role, filler)
                    role_assertions.add((role, node, child))
                    if child not in seen:
                        seen.add(child)
                        frontier.append(child)
    return make_abox(concept_assertions, role_assertions, abox.extra_individuals)


def product(i1: Interpretation, i2: Interpretation) -> Interpretation:
    """Direct product; every element pair is kept in the universe (top pairs)."""
    concept_assertions = set()
    for name in i1.signature.concept_names & i2.signature.concept_names:
        for a in i1.with_label(name):
            for b in i2.with_label(name):
                concept_assertions.add((name, Pair(a, b)))
    role_assertions = set()
    by_role = {}
    for r, a, b in i2.role_assertions:
        by_role.setdefault(r, []).append((a, b))
    for r, a1, b1 in i1.role_assertions:
        for a2, b2 in by_role.get(r, ()):
            role_assertions.add((r, Pair(a1, a2), Pair(b1, b2)))
    extra = {Pair(a, b) for a in i1.universe for b in i2.universe}
    return make_abox(concept_assertions, role_assertions, extra)


def tuple_product(t1, t2) -> tuple:
    if len(t1) != len(t2):
        raise ArityError(f"tuple arity mismatch: {len(t1)} vs {len(t2)}")
    return tuple(Pair(a, b) for a, b in zip(t1, t2))


# ---------------------------------------------------------------------------
# homomorphisms


def find_homomorphism(q, interp: Interpretation, fixed=None):
    """A homomorphism from the query into the interpretation extending `fixed`.

    Backtracking with most-constrained-variable ordering; candidates are tried
    in spelling order, so the result is deterministic.  Returns a dict or None.
    """
    fixed = dict(fixed or {})
    for v, e in fixed.items():
        if e not in interp.universe:
            raise ArityError(f"fixed image {e!r} outside the interpretation")
    variables = sorted(q.variables, key=lambda v: v if isinstance(v, str) else v.spell())
    concept_by_var = {}
    for n, x in q.concept_atoms:
        concept_by_var.setdefault(x, []).append(n)
    out_atoms, in_atoms = {}, {}
    for r, x, y in q.role_atoms:
        out_atoms.setdefault(x, []).append((r, y))
        in_atoms.setdefault(y, []).append((r, x))

    all_elements = interp.individuals()
    assignment = dict(fixed)

    def candidates(v):
        pools = []
        for n in concept_by_var.get(v, ()):
            pools.append(interp.with_label(n))
        for r, y in out_atoms.get(v, ()):
            if y in assignment:
                pools.append(interp.predecessors(r, assignment[y]))
        for r, x in in_atoms.get(v, ()):
            if x in assignment:
                pools.append(interp.successors(r, assignment[x]))
        if not pools:
            return all_elements
        pool = set(pools[0])
        for p in pools[1:]:
            pool &= p
            if not pool:
                break
        return sorted(pool, key=individual_key)

    def consistent(v, e):
        for r, y in out_atoms.get(v, ()):
            if y in assignment and assignment[y] not in interp.successors(r, e):
                return False
        for r, x in in_atoms.get(v, ()):
            if x in assignment and assignment[x] not in interp.predecessors(r, e):
                return False
        return True

    for v in list(fixed):
        if v not in q.variables:
            raise ArityError(f"fixed variable {v!r} not in the query")
        if not consistent(v, fixed[v]):
            return None
        for n in concept_by_var.get(v, ()):
            if fixed[v] not in interp.with_label(n):
                return None

    remaining = [v for v in variables if v not in assignment]

    def search():
        if not remaining:
            return True
        best_i, best_pool = None, None
        for i, v in enumerate(remaining):
            pool = candidates(v)
            if best_pool is None or len(pool) < len(best_pool):
                best_i, best_pool = i, pool
                if not pool:
                    break
        v = remaining.pop(best_i)
        for e in best_pool:
            assignment[v] = e
            if consistent(v, e) and search():
                return True
            del assignment[v]
        remaining.insert(best_i, v)
        return False

    if search():
        return dict(assignment)
    return None


def is_homomorphism(mapping, source: Interpretation, target: Interpretation) -> bool:
    for n, a in source.concept_assertions:
        if n != TOP_NAME and mapping[a] not in target.with_label(n):
            return False
    for r, a, b in source.role_assertions:
        if mapping[b] not in target.successors(r, mapping[a]):
            return False
    return True


# ---------------------------------------------------------------------------
# certain answers and containment


def _query_components(q):
    """Connected components of the query; each a (vars, concept_atoms, role_atoms)."""
    parent = {v: v for v in q.variables}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def union(a, b):
        parent[find(a)] = find(b)

    for _, x, y in q.role_atoms:
        union(x, y)
    groups = {}
    for v in q.variables:
        groups.setdefault(find(v), set()).add(v)
    comps = []
    for vs in groups.values():
        ca = {(n, x) for n, x in q.concept_atoms if x in vs}
        ra = {(r, x, y) for r, x, y in q.role_atoms if x in vs}
        comps.append((vs, ca, ra))
    comps.sort(key=lambda c: min(v if isinstance(v, str) else v.spell() for v in c[0]))
    return comps


def _reachable_step_types(abox, ontology):
    """All (role, filler) trace steps occurring anywhere in the chase."""
    r = reasoner_for(ontology)
    steps = sorted(
        {
            (c.role.name, c.filler)
            for c in ontology.sub_concepts
            if isinstance(c, Exists) and not c.role.inverted
        },
        key=lambda t: (t[0], t[1].text()),
    )
    labels = r.saturated_labels(abox)
    reached = set()
    frontier = []
    for a in abox.universe:
        for role, filler in steps:
            if (role, filler) not in reached and r.entails_exists_at(
                abox, labels, a, role, filler
            ):
                reached.add((role, filler))
                frontier.append((role, filler))
    while frontier:
        role, filler = frontier.pop()
        node_type = r.successor_type(_filler_name(filler), role)
        for role2, filler2 in steps:
            if (role2, filler2) not in reached and r.entails_exists(
                node_type, role2, filler2
            ):
                reached.add((role2, filler2))
                frontier.append((role2, filler2))
    return sorted(reached, key=lambda t: (t[0], t[1].text()))


def _type_tree(ontology, step, depth) -> Interpretation:
    """Canonical subtree of the universal model below a trace step."""
    r = reasoner_for(ontology)
    steps = sorted(
        {
            (c.role.name, c.filler)
            for c in ontology.sub_concepts
            if isinstance(c, Exists) and not c.role.inverted
        },
        key=lambda t: (t[0], t[1].text()),
    )
    root = Trace(Named("_root"), (step,))
    concept_assertions, role_assertions = set(), set()
    frontier = [root]
    for _ in range(depth + 1):
        next_frontier = []
        for node in frontier:
            role, filler = node.steps[-1]
            node_type = r.successor_type(_filler_name(filler), role)
            for name in node_type:
                concept_assertions.add((name, node))
            if not node_type:
                concept_assertions.add((TOP_NAME, node))
            for role2, filler2 in steps:
                if r.entails_exists(node_type, role2, filler2):
                    child = node.extend(role2, filler2)
                    role_assertions.add((role2, node, child))
                    next_frontier.append(child)
        frontier = next_frontier
    return make_abox(concept_assertions, role_assertions)


def _check_csf(q) -> bool:
    from .analysis import is_chordal, is_symmetry_free

    return is_chordal(q) and is_symmetry_free(q)


def holds(abox: ABox, ontology: Ontology, q, answer_tuple) -> bool:
    """Certain-answer check A,O |= q(answer_tuple).

    Chordal symmetry-free queries are evaluated on the 3-compact model, which
    is universal for them.  Other queries are evaluated on bounded unravelings
    of the universal model, component by component: components touching the
    named part fit within |var(q)| levels of it, and Boolean components can be
    relocated below the first occurrence of their topmost trace type.
    """
    if len(answer_tuple) != q.arity:
        raise ArityError(
            f"answer tuple has arity {len(answer_tuple)}, query {q.arity}"
        )
    for e in answer_tuple:
        if e not in abox.universe:
            raise ArityError(f"answer individual {e!r} not in the ABox")
    fixed = {}
    for v, e in zip(q.head, answer_tuple):
        if fixed.setdefault(v, e) != e:
            return False  # repeated head variable bound to two individuals

    if _check_csf(q):
        model = build_compact3(abox, ontology)
        return find_homomorphism(q, model, fixed) is not None

    depth = max(len(q.variables), 1)
    base = build_chase(abox, ontology, depth)
    trees = None
    from .syntax import ConjunctiveQuery  # local alias for component queries

    for vs, ca, ra in _query_components(q):
        sub = ConjunctiveQuery(
            tuple(v for v in q.head if v in vs),
            frozenset(ca),
            frozenset(ra),
            frozenset(vs),
        )
        sub_fixed = {v: e for v, e in fixed.items() if v in vs}
        if find_homomorphism(sub, base, sub_fixed) is not None:
            continue
        if sub_fixed or not sub.is_boolean:
            return False
        if trees is None:
            trees = [
                _type_tree(ontology, step, depth)
                for step in _reachable_step_types(abox, ontology)
            ]
        if not any(find_homomorphism(sub, t) is not None for t in trees):
            return False
    return True


def contained_in(q1, q2, ontology: Ontology) -> bool:
    """q1 is contained in q2 under the ontology (on all ABoxes and tuples)."""
    if q1.arity != q2.arity:
        raise ArityError(f"arity mismatch: {q1.arity} vs {q2.arity}")
    from .syntax import cq_to_abox

    abox, tup = cq_to_abox(q1)
    return holds(abox, ontology, q2, tup)


def equivalent(q1, q2, ontology: Ontology) -> bool:
    return contained_in(q1, q2, ontology) and contained_in(q2, q1, ontology)


def greatest_simulation(i1: Interpretation, i2: Interpretation) -> frozenset:
    """Largest simulation relation from i1 to i2 (downward fixpoint)."""
    elems1 = i1.individuals()
    elems2 = i2.individuals()
    sim = {
        (d, e)
        for d in elems1
        for e in elems2
        if i1.labels(d) <= i2.labels(e)
    }
    roles = i1.role_names()
    changed = True
    while changed:
        changed = False
        for (d, e) in list(sim):
            ok = True
            for r in roles:
                for d2 in i1.successors(r, d):
                    if not any((d2, e2) in sim for e2 in i2.successors(r, e)):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                sim.discard((d, e))
                changed = True
    return frozenset(sim)
