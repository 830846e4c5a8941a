"""Normal-form conversion of ELdr ontologies and the translation layer.

`normalize_ontology` introduces one fresh name per subconcept and emits only
bridge inclusions; the result is a conservative extension in normal form in
which every fresh name is equivalent to the concept it abbreviates.  The
translation functions let a learner that works over the normalized ontology
and extended signature talk to an oracle that knows only the original one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

from .errors import SignatureError
from .syntax import (
    ABox,
    And,
    Concept,
    ConceptInclusion,
    ConjunctiveQuery,
    Exists,
    Name,
    Named,
    Ontology,
    RoleRef,
    Signature,
    Top,
    TOP,
    TOP_NAME,
    conj,
    make_abox,
    make_cq,
    make_ontology,
)

FRESH_PREFIX = "X__"


def fresh_name_for(concept: Concept) -> str:
    digest = hashlib.sha1(concept.text().encode()).hexdigest()[:10]
    return f"{FRESH_PREFIX}{digest}"


@dataclass(frozen=True)
class NormalizationMap:
    original: Ontology
    normalized: Ontology
    fresh: dict  # Concept -> fresh concept name

    def fresh_signature(self) -> Signature:
        return Signature(frozenset(self.fresh.values()), frozenset())

    def concept_of(self, fresh_name: str) -> Concept:
        return self._by_name[fresh_name]

    @cached_property
    def _by_name(self):
        return {v: k for k, v in self.fresh.items()}

    def is_fresh(self, name: str) -> bool:
        return name in self._by_name


def normalize_ontology(ontology: Ontology, sigma: Signature) -> NormalizationMap:
    """Emit the bridge inclusions making every subconcept nameable.

    For C in sub(O): name/top bridges X_C == C, conjunction splits, existential
    bridges, one X_C <= X_D per original inclusion and direct range bridges.
    """
    if any(n.startswith(FRESH_PREFIX) for n in sigma.concept_names):
        raise SignatureError(f"signature uses the reserved prefix {FRESH_PREFIX!r}")
    missing = (
        ontology.signature.concept_names - sigma.concept_names,
        ontology.signature.role_names - sigma.role_names,
    )
    if missing[0] or missing[1]:
        raise SignatureError(f"ontology symbols outside the signature: {missing}")

    fresh = {c: fresh_name_for(c) for c in ontology.sub_concepts}
    x = lambda c: Name(fresh[c])
    cis = []

    def emit(ci):
        if ci not in cis:
            cis.append(ci)

    for c in ontology.sub_concepts:
        if isinstance(c, Top):
            emit(ConceptInclusion(x(c), TOP))
            emit(ConceptInclusion(TOP, x(c)))
        elif isinstance(c, Name):
            emit(ConceptInclusion(x(c), c))
            emit(ConceptInclusion(c, x(c)))
        elif isinstance(c, And):
            d1, d2 = c.parts[0], conj(c.parts[1:])
            emit(ConceptInclusion(x(c), x(d1)))
            emit(ConceptInclusion(x(c), x(d2)))
            emit(ConceptInclusion(conj((x(d1), x(d2))), x(c)))
        elif isinstance(c, Exists):
            emit(ConceptInclusion(x(c), Exists(c.role, x(c.filler))))
            emit(ConceptInclusion(Exists(c.role, x(c.filler)), x(c)))
        else:  # pragma: no cover
            raise TypeError(c)
    for ci in ontology.cis:
        if ci.is_range_restriction():
            emit(ConceptInclusion(ci.lhs, x(ci.rhs)))
        else:
            emit(ConceptInclusion(x(ci.lhs), x(ci.rhs)))
    return NormalizationMap(ontology, make_ontology(cis), fresh)


def extended_signature(nmap: NormalizationMap, sigma: Signature) -> Signature:
    return sigma | nmap.fresh_signature()


# ---------------------------------------------------------------------------
# translations between the two signatures


def concept_as_abox_at(concept: Concept, root, fresh_inds):
    """Assertions of the concept's canonical ABox with the given root."""
    concept_assertions, role_assertions = set(), set()

    def emit(c, node):
        if isinstance(c, Top):
            concept_assertions.add((TOP_NAME, node))
        elif isinstance(c, Name):
            concept_assertions.add((c.name, node))
        elif isinstance(c, And):
            for p in c.parts:
                emit(p, node)
        elif isinstance(c, Exists):
            child = fresh_inds()
            if c.role.inverted:
                role_assertions.add((c.role.name, child, node))
            else:
                role_assertions.add((c.role.name, node, child))
            emit(c.filler, child)

    emit(concept, root)
    return concept_assertions, role_assertions


def translate_membership_abox(abox: ABox, nmap: NormalizationMap) -> ABox:
    """Replace fresh-name assertions X_C(a) by C viewed as an ABox rooted at a."""
    counter = [0]

    def fresh_inds():
        counter[0] += 1
        return Named(f"_nf{counter[0]}")

    concept_assertions, role_assertions = set(), set(abox.role_assertions)
    for name, a in abox.concept_assertions:
        if name != TOP_NAME and nmap.is_fresh(name):
            ca, ra = concept_as_abox_at(nmap.concept_of(name), a, fresh_inds)
            concept_assertions.update(ca)
            role_assertions.update(ra)
        else:
            concept_assertions.add((name, a))
    return make_abox(concept_assertions, role_assertions, abox.extra_individuals)


def translate_hypothesis(q: ConjunctiveQuery, nmap: NormalizationMap) -> ConjunctiveQuery:
    """Replace fresh-name atoms X_C(x) by the ditree of C rooted at x."""
    counter = [0]

    def fresh_var():
        counter[0] += 1
        return f"_tr{counter[0]}"

    concept_atoms, role_atoms = set(), set()

    def emit(c, node):
        if isinstance(c, Top):
            return
        if isinstance(c, Name):
            concept_atoms.add((c.name, node))
        elif isinstance(c, And):
            for p in c.parts:
                emit(p, node)
        elif isinstance(c, Exists):
            child = fresh_var()
            if c.role.inverted:
                role_atoms.add((c.role.name, child, node))
            else:
                role_atoms.add((c.role.name, node, child))
            emit(c.filler, child)

    for name, x in q.concept_atoms:
        if nmap.is_fresh(name):
            emit(nmap.concept_of(name), x)
        else:
            concept_atoms.add((name, x))
    role_atoms.update(q.role_atoms)
    return make_cq(q.head, concept_atoms, role_atoms, q.variables)


def restrict_to_signature(abox: ABox, sigma: Signature) -> ABox:
    """Drop assertions over symbols outside the signature.

    Individuals that would disappear are kept with a top assertion so that
    answer tuples over the original ABox stay well-formed.
    """
    concept_assertions = {
        (n, a)
        for n, a in abox.concept_assertions
        if n == TOP_NAME or n in sigma.concept_names
    }
    role_assertions = {
        (r, a, b) for r, a, b in abox.role_assertions if r in sigma.role_names
    }
    return make_abox(concept_assertions, role_assertions, abox.universe)


class TranslatingOracle:
    """Learner-facing oracle over the extended signature.

    Membership ABoxes are translated down before they reach the wrapped
    oracle, hypotheses are translated down for equivalence queries, and
    counterexamples are restricted to the original signature on the way up.
    """

    def __init__(self, oracle, nmap: NormalizationMap, sigma: Signature):
        self.oracle = oracle
        self.nmap = nmap
        self.sigma = sigma

    @property
    def arity(self):
        return self.oracle.arity

    def membership(self, abox, answer_tuple) -> bool:
        return self.oracle.membership(
            translate_membership_abox(abox, self.nmap), answer_tuple
        )

    def equivalence(self, q, mode="class-restricted"):
        result = self.oracle.equivalence(translate_hypothesis(q, self.nmap), mode)
        if result is None:
            return None
        return result.restricted(self.sigma)
