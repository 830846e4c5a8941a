"""ASTs and text formats for concepts, ontologies, ABoxes and conjunctive queries.

Concepts are built from the top concept, concept names, conjunction and
existential restrictions over (possibly inverted) roles.  Conjunctions are
kept in a canonical form: flattened, duplicate-free and sorted, so structural
equality coincides with equality modulo associativity/commutativity/idempotence.

Text grammars (`#` starts a comment):

  ontology   one concept inclusion per line:   concept "<=" concept
  concept    "top" | NAME | concept "&" concept | "ex" role "." atomic-or-paren
  role       NAME | NAME "-"
  abox       one assertion per line:  A(a) | top(a) | r(a,b) | r-(a,b)
  cq         q(v1,...,vk) :- atom, atom, ...    ("q() :-" for Boolean queries)

Inverse role assertions/atoms are normalized away while parsing: r-(a,b)
becomes r(b,a).  `top(x)` in a query marks a variable that occurs in no atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

from .errors import ArityError, ParseError

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
RESERVED_NAMES = {"top", "ex", "q"}

TOP_NAME = "top"  # marker used for the top concept in assertion position


# ---------------------------------------------------------------------------
# concepts


@dataclass(frozen=True)
class RoleRef:
    name: str
    inverted: bool = False

    def __post_init__(self):
        if not NAME_RE.fullmatch(self.name):
            raise ValueError(f"invalid role name {self.name!r}")

    def inverse(self) -> "RoleRef":
        return RoleRef(self.name, not self.inverted)

    def text(self) -> str:
        return self.name + ("-" if self.inverted else "")


class Concept:
    """Base class of the concept AST."""

    def text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.text()

    def is_el(self) -> bool:
        """True if the concept contains no inverse roles."""
        return not any(r.inverted for r in roles_of(self))


@dataclass(frozen=True)
class Top(Concept):
    def text(self):
        return "top"


TOP = Top()


@dataclass(frozen=True)
class Name(Concept):
    name: str

    def __post_init__(self):
        if not NAME_RE.fullmatch(self.name) or self.name in RESERVED_NAMES:
            raise ValueError(f"invalid concept name {self.name!r}")

    def text(self):
        return self.name


@dataclass(frozen=True)
class And(Concept):
    parts: tuple

    def text(self):
        return " & ".join(_part_text(p) for p in self.parts)


@dataclass(frozen=True)
class Exists(Concept):
    role: RoleRef
    filler: Concept

    def text(self):
        f = self.filler
        if isinstance(f, (Top, Name)):
            return f"ex {self.role.text()}.{f.text()}"
        return f"ex {self.role.text()}.({f.text()})"


def _part_text(c: Concept) -> str:
    # conjunction operands: existentials bind tighter than &, no parens needed
    return c.text()


def conj(parts) -> Concept:
    """Canonical conjunction: flatten, drop top, dedupe, sort."""
    flat = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.parts)
        elif isinstance(p, Top):
            continue
        else:
            flat.append(p)
    unique = sorted(set(flat), key=lambda c: c.text())
    if not unique:
        return TOP
    if len(unique) == 1:
        return unique[0]
    return And(tuple(unique))


def exists(role, filler) -> Exists:
    if isinstance(role, str):
        role = parse_role(role)
    return Exists(role, filler)


def subconcepts(concept: Concept):
    """All subconcepts of `concept`, including itself.

    Canonical flat conjunctions are decomposed binarily (first part vs rest)
    so that normalization can introduce one bridge name per split.
    """
    seen = []

    def walk(c):
        if c in seen:
            return
        seen.append(c)
        if isinstance(c, And):
            walk(c.parts[0])
            walk(conj(c.parts[1:]))
        elif isinstance(c, Exists):
            walk(c.filler)

    walk(concept)
    return seen


def roles_of(concept: Concept):
    if isinstance(concept, Exists):
        yield concept.role
        yield from roles_of(concept.filler)
    elif isinstance(concept, And):
        for p in concept.parts:
            yield from roles_of(p)


def concept_names_of(concept: Concept):
    if isinstance(concept, Name):
        yield concept.name
    elif isinstance(concept, Exists):
        yield from concept_names_of(concept.filler)
    elif isinstance(concept, And):
        for p in concept.parts:
            yield from concept_names_of(p)


# ---------------------------------------------------------------------------
# ontologies


@dataclass(frozen=True)
class ConceptInclusion:
    lhs: Concept
    rhs: Concept

    def text(self):
        return f"{self.lhs.text()} <= {self.rhs.text()}"

    def is_range_restriction(self) -> bool:
        lhs = self.lhs
        return (
            isinstance(lhs, Exists)
            and lhs.role.inverted
            and isinstance(lhs.filler, Top)
            and self.rhs.is_el()
        )


def _names_or_top(*concepts):
    return all(isinstance(c, (Name, Top)) for c in concepts)


def ci_is_normal_form(ci: ConceptInclusion) -> bool:
    """The four ELdr normal-form shapes over concept names and top."""
    lhs, rhs = ci.lhs, ci.rhs
    if isinstance(lhs, And):
        return len(lhs.parts) == 2 and _names_or_top(*lhs.parts, rhs)
    if isinstance(lhs, (Name, Top)):
        if isinstance(rhs, Exists):
            return not rhs.role.inverted and _names_or_top(rhs.filler)
        return _names_or_top(rhs)
    if isinstance(lhs, Exists):
        if lhs.role.inverted:
            return isinstance(lhs.filler, Top) and _names_or_top(rhs)
        return _names_or_top(lhs.filler, rhs)
    return False


@dataclass(frozen=True)
class Ontology:
    cis: tuple

    def __post_init__(self):
        for ci in self.cis:
            if not ci.rhs.is_el():
                raise ValueError(f"inverse role on right-hand side: {ci.text()}")
            if not ci.lhs.is_el() and not ci.is_range_restriction():
                raise ValueError(
                    f"inverse role outside range restriction: {ci.text()}"
                )

    @cached_property
    def dialect(self) -> str:
        if all(ci_is_normal_form(ci) for ci in self.cis):
            return "ELdr-normal-form"
        if all(ci.lhs.is_el() for ci in self.cis):
            return "EL"
        return "ELdr"

    @property
    def is_normal_form(self) -> bool:
        return self.dialect == "ELdr-normal-form"

    @cached_property
    def sub_concepts(self) -> tuple:
        """sub(O): concepts of O closed under subconcepts, inverse-free parts only.

        The left-hand side of a range restriction contributes just its filler.
        """
        out = []
        for ci in self.cis:
            sides = [ci.rhs]
            sides.append(ci.lhs.filler if ci.is_range_restriction() else ci.lhs)
            for side in sides:
                for c in subconcepts(side):
                    if c not in out:
                        out.append(c)
        return tuple(sorted(out, key=lambda c: c.text()))

    @cached_property
    def signature(self) -> "Signature":
        cn, rn = set(), set()
        for ci in self.cis:
            for side in (ci.lhs, ci.rhs):
                cn.update(concept_names_of(side))
                rn.update(r.name for r in roles_of(side))
        return Signature(frozenset(cn), frozenset(rn))

    def role_names(self):
        return sorted(self.signature.role_names)

    def text(self):
        return "".join(ci.text() + "\n" for ci in self.cis)


def make_ontology(cis) -> Ontology:
    seen, out = set(), []
    for ci in cis:
        if ci not in seen:
            seen.add(ci)
            out.append(ci)
    return Ontology(tuple(out))


EMPTY_ONTOLOGY = Ontology(())


@dataclass(frozen=True)
class Signature:
    concept_names: frozenset
    role_names: frozenset

    def __or__(self, other):
        return Signature(
            self.concept_names | other.concept_names,
            self.role_names | other.role_names,
        )

    def __contains__(self, symbol):
        name, kind = symbol
        pool = self.concept_names if kind == "concept" else self.role_names
        return name in pool


# ---------------------------------------------------------------------------
# individuals and ABoxes


@dataclass(frozen=True)
class Named:
    """A plain named individual; other element kinds live in `reasoning`."""

    name: str

    def spell(self):
        return self.name


def spell(individual) -> str:
    return individual.spell()


def individual_key(individual):
    return individual.spell()


@dataclass(frozen=True)
class ABox:
    """A finite set of concept/role assertions; doubles as an interpretation.

    Concept assertions use concept names or the marker ``"top"``; `top`
    assertions only keep their individual in the universe.  Individuals may be
    any element kind (see `reasoning`); parsed ABoxes use `Named`.
    """

    concept_assertions: frozenset  # of (concept_name_or_top, individual)
    role_assertions: frozenset  # of (role_name, individual, individual)
    extra_individuals: frozenset = frozenset()

    @cached_property
    def universe(self) -> frozenset:
        inds = set(self.extra_individuals)
        inds.update(a for _, a in self.concept_assertions)
        for _, a, b in self.role_assertions:
            inds.add(a)
            inds.add(b)
        return frozenset(inds)

    def individuals(self) -> list:
        return sorted(self.universe, key=individual_key)

    @cached_property
    def _labels(self) -> dict:
        out = {}
        for name, a in self.concept_assertions:
            if name != TOP_NAME:
                out.setdefault(a, set()).add(name)
        return out

    def labels(self, individual) -> frozenset:
        return frozenset(self._labels.get(individual, ()))

    @cached_property
    def _succ(self) -> dict:
        out = {}
        for r, a, b in self.role_assertions:
            out.setdefault((r, a), set()).add(b)
        return out

    @cached_property
    def _pred(self) -> dict:
        out = {}
        for r, a, b in self.role_assertions:
            out.setdefault((r, b), set()).add(a)
        return out

    @cached_property
    def _label_index(self) -> dict:
        out = {}
        for name, a in self.concept_assertions:
            if name != TOP_NAME:
                out.setdefault(name, set()).add(a)
        return out

    def successors(self, role, individual) -> set:
        return self._succ.get((role, individual), set())

    def predecessors(self, role, individual) -> set:
        return self._pred.get((role, individual), set())

    def with_label(self, concept_name) -> set:
        return self._label_index.get(concept_name, set())

    @cached_property
    def signature(self) -> Signature:
        cn = {n for n, _ in self.concept_assertions if n != TOP_NAME}
        rn = {r for r, _, _ in self.role_assertions}
        return Signature(frozenset(cn), frozenset(rn))

    def role_names(self):
        return sorted({r for r, _, _ in self.role_assertions})

    def size(self) -> int:
        return len(self.concept_assertions) + len(self.role_assertions)

    def text(self) -> str:
        """Canonical dump, one assertion per line, element spellings."""
        lines = []
        for name, a in sorted(
            self.concept_assertions, key=lambda t: (t[0], individual_key(t[1]))
        ):
            lines.append(f"{name}({spell(a)})")
        for r, a, b in sorted(
            self.role_assertions,
            key=lambda t: (t[0], individual_key(t[1]), individual_key(t[2])),
        ):
            lines.append(f"{r}({spell(a)},{spell(b)})")
        for a in self.individuals():
            if a not in self._labels and not self._has_edge(a):
                if (TOP_NAME, a) not in self.concept_assertions:
                    lines.append(f"top({spell(a)})")
        return "".join(line + "\n" for line in lines)

    def _has_edge(self, a):
        return any(a in (x, y) for _, x, y in self.role_assertions)


def make_abox(concept_assertions=(), role_assertions=(), extra_individuals=()) -> ABox:
    return ABox(
        frozenset(concept_assertions),
        frozenset(role_assertions),
        frozenset(extra_individuals),
    )


EMPTY_ABOX = make_abox()


# ---------------------------------------------------------------------------
# conjunctive queries


@dataclass(frozen=True)
class ConjunctiveQuery:
    """q(head) <- concept atoms A(x) and role atoms r(x,y).

    `variables` is the full variable set; it may exceed the atom variables by
    answer variables (or parsed `top(x)` markers) that occur in no atom.
    """

    head: tuple
    concept_atoms: frozenset  # of (concept_name, var)
    role_atoms: frozenset  # of (role_name, var, var)
    variables: frozenset

    @property
    def arity(self) -> int:
        return len(self.head)

    @property
    def is_boolean(self) -> bool:
        return not self.head

    def answer_variables(self) -> frozenset:
        return frozenset(self.head)

    def quantified_variables(self) -> frozenset:
        return self.variables - frozenset(self.head)

    @cached_property
    def signature(self) -> Signature:
        return Signature(
            frozenset(n for n, _ in self.concept_atoms),
            frozenset(r for r, _, _ in self.role_atoms),
        )

    def atom_count(self) -> int:
        return len(self.concept_atoms) + len(self.role_atoms)

    def text(self) -> str:
        head = ",".join(_var_text(v) for v in self.head)
        atoms = []
        for n, x in sorted(self.concept_atoms, key=lambda t: (t[0], _var_key(t[1]))):
            atoms.append(f"{n}({_var_text(x)})")
        for r, x, y in sorted(
            self.role_atoms, key=lambda t: (t[0], _var_key(t[1]), _var_key(t[2]))
        ):
            atoms.append(f"{r}({_var_text(x)},{_var_text(y)})")
        atom_vars = {v for _, v in self.concept_atoms}
        for _, x, y in self.role_atoms:
            atom_vars.update((x, y))
        for v in sorted(self.variables - atom_vars, key=_var_key):
            atoms.append(f"top({_var_text(v)})")
        return f"q({head}) :- " + ", ".join(atoms)


def _var_text(v):
    return v if isinstance(v, str) else spell(v)


def _var_key(v):
    return v if isinstance(v, str) else individual_key(v)


def make_cq(head, concept_atoms=(), role_atoms=(), extra_variables=()) -> ConjunctiveQuery:
    variables = set(head) | set(extra_variables)
    variables.update(v for _, v in concept_atoms)
    for _, x, y in role_atoms:
        variables.update((x, y))
    return ConjunctiveQuery(
        tuple(head), frozenset(concept_atoms), frozenset(role_atoms), frozenset(variables)
    )


def concept_to_cq(concept: Concept) -> ConjunctiveQuery:
    """View an ELI concept as a unary tree-shaped CQ rooted at x0.

    One fresh quantified variable `_v<k>` per existential restriction.
    """
    counter = [0]
    concept_atoms, role_atoms = [], []

    def fresh():
        counter[0] += 1
        return f"_v{counter[0]}"

    def emit(c, var):
        if isinstance(c, Top):
            return
        if isinstance(c, Name):
            concept_atoms.append((c.name, var))
        elif isinstance(c, And):
            for p in c.parts:
                emit(p, var)
        elif isinstance(c, Exists):
            child = fresh()
            if c.role.inverted:
                role_atoms.append((c.role.name, child, var))
            else:
                role_atoms.append((c.role.name, var, child))
            emit(c.filler, child)
        else:  # pragma: no cover
            raise TypeError(c)

    emit(concept, "x0")
    return make_cq(("x0",), concept_atoms, role_atoms)


def cq_to_abox(q: ConjunctiveQuery):
    """View variables as individuals; returns (ABox, answer individuals)."""

    def ind(v):
        return Named(v) if isinstance(v, str) else v

    abox = make_abox(
        {(n, ind(x)) for n, x in q.concept_atoms},
        {(r, ind(x), ind(y)) for r, x, y in q.role_atoms},
        {ind(v) for v in q.variables},
    )
    return abox, tuple(ind(v) for v in q.head)


def abox_to_cq(abox: ABox, answer_tuple) -> ConjunctiveQuery:
    """View an ABox with a fixed answer tuple as a CQ (individuals = variables).

    Individuals carrying no atom are dropped unless they occur in the tuple:
    as quantified variables they would be unconstrained and the resulting
    query is equivalent without them.
    """
    concept_atoms = {
        (n, a) for n, a in abox.concept_assertions if n != TOP_NAME
    }
    role_atoms = set(abox.role_assertions)
    return make_cq(tuple(answer_tuple), concept_atoms, role_atoms)


def rename_query(q: ConjunctiveQuery, prefix="x") -> ConjunctiveQuery:
    """Deterministically rename variables to plain names (head first)."""
    mapping = {}
    for v in q.head:
        if v not in mapping:
            mapping[v] = f"{prefix}{len(mapping)}"
    for v in sorted(q.variables, key=_var_key):
        if v not in mapping:
            mapping[v] = f"{prefix}{len(mapping)}"
    return ConjunctiveQuery(
        tuple(mapping[v] for v in q.head),
        frozenset((n, mapping[x]) for n, x in q.concept_atoms),
        frozenset((r, mapping[x], mapping[y]) for r, x, y in q.role_atoms),
        frozenset(mapping[v] for v in q.variables),
    )


def cq_signature_names(q: ConjunctiveQuery) -> Signature:
    return q.signature


# ---------------------------------------------------------------------------
# tokenizer


@dataclass(frozen=True)
class _Token:
    kind: str  # NAME, SYM, END
    value: str
    line: int
    column: int


_SYMBOLS = ("<=", ":-", "(", ")", "&", ".", ",", "-")


def _tokenize(text, line_no=1):
    tokens = []
    line, col = line_no, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        m = NAME_RE.match(text, i)
        if m:
            tokens.append(_Token("NAME", m.group(), line, col))
            col += len(m.group())
            i = m.end()
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token("SYM", sym, line, col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("END", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text, line_no=1):
        self.tokens = _tokenize(text, line_no)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column)

    def expect(self, kind, value=None):
        tok = self.next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            self.error(f"expected {want!r}, found {tok.value or 'end of input'!r}", tok)
        return tok

    def at_end(self):
        return self.peek().kind == "END"

    def name(self, what="name"):
        tok = self.expect("NAME")
        return tok.value, tok

    # --- concepts ------------------------------------------------------

    def role(self) -> RoleRef:
        n, _ = self.name("role name")
        if self.peek().kind == "SYM" and self.peek().value == "-":
            self.next()
            return RoleRef(n, True)
        return RoleRef(n)

    def concept(self) -> Concept:
        parts = [self.concept_atom()]
        while self.peek().kind == "SYM" and self.peek().value == "&":
            self.next()
            parts.append(self.concept_atom())
        return conj(parts)

    def concept_atom(self) -> Concept:
        tok = self.peek()
        if tok.kind == "SYM" and tok.value == "(":
            self.next()
            c = self.concept()
            self.expect("SYM", ")")
            return c
        if tok.kind != "NAME":
            self.error("expected a concept")
        if tok.value == "top":
            self.next()
            return TOP
        if tok.value == "ex":
            self.next()
            role = self.role()
            self.expect("SYM", ".")
            return Exists(role, self.concept_atom())
        self.next()
        if tok.value in RESERVED_NAMES:
            self.error(f"reserved name {tok.value!r}", tok)
        return Name(tok.value)


def parse_role(text) -> RoleRef:
    p = _Parser(text)
    role = p.role()
    if not p.at_end():
        p.error("trailing input")
    return role


def parse_concept(text) -> Concept:
    p = _Parser(text)
    c = p.concept()
    if not p.at_end():
        p.error("trailing input")
    return c


# ---------------------------------------------------------------------------
# ontology / abox / cq parsing


def parse_ontology(text) -> Ontology:
    cis = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        p = _Parser(line.split("#", 1)[0], line_no)
        lhs = p.concept()
        p.expect("SYM", "<=")
        rhs = p.concept()
        if not p.at_end():
            p.error("trailing input on concept inclusion")
        ci = ConceptInclusion(lhs, rhs)
        try:
            Ontology((ci,))
        except ValueError as exc:
            raise ParseError(str(exc), line_no, 1) from None
        cis.append(ci)
    return make_ontology(cis)


def serialize_ontology(ontology: Ontology) -> str:
    return ontology.text()


def _parse_assertion_line(p: _Parser):
    """Returns ('concept', name, a) or ('role', r, a, b)."""
    pred, tok = p.name()
    inverted = False
    if p.peek().kind == "SYM" and p.peek().value == "-":
        p.next()
        inverted = True
    p.expect("SYM", "(")
    first, ftok = p.name()
    if p.peek().kind == "SYM" and p.peek().value == ",":
        p.next()
        second, _ = p.name()
        p.expect("SYM", ")")
        if pred in RESERVED_NAMES:
            p.error(f"reserved name {pred!r}", tok)
        if inverted:
            first, second = second, first
        return ("role", pred, first, second)
    p.expect("SYM", ")")
    if inverted:
        p.error("inverse role in concept assertion", tok)
    if pred != TOP_NAME and pred in RESERVED_NAMES:
        p.error(f"reserved name {pred!r}", tok)
    return ("concept", pred, first)


def parse_abox(text) -> ABox:
    concept_assertions, role_assertions, extra = set(), set(), set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        p = _Parser(line.split("#", 1)[0], line_no)
        parsed = _parse_assertion_line(p)
        if not p.at_end():
            p.error("trailing input on assertion")
        if parsed[0] == "concept":
            _, name, a = parsed
            if name == TOP_NAME:
                extra.add(Named(a))
            else:
                concept_assertions.add((name, Named(a)))
        else:
            _, r, a, b = parsed
            role_assertions.add((r, Named(a), Named(b)))
    return make_abox(concept_assertions, role_assertions, extra)


def serialize_abox(abox: ABox) -> str:
    return abox.text()


def parse_cq(text) -> ConjunctiveQuery:
    p = _Parser(text)
    p.expect("NAME", "q")
    p.expect("SYM", "(")
    head = []
    if not (p.peek().kind == "SYM" and p.peek().value == ")"):
        head.append(p.name("variable")[0])
        while p.peek().kind == "SYM" and p.peek().value == ",":
            p.next()
            head.append(p.name("variable")[0])
    p.expect("SYM", ")")
    p.expect("SYM", ":-")
    concept_atoms, role_atoms, top_vars = set(), set(), set()
    if not p.at_end():
        while True:
            parsed = _parse_assertion_line(p)
            if parsed[0] == "concept":
                _, name, x = parsed
                if name == TOP_NAME:
                    top_vars.add(x)
                else:
                    concept_atoms.add((name, x))
            else:
                _, r, x, y = parsed
                role_atoms.add((r, x, y))
            if p.peek().kind == "SYM" and p.peek().value == ",":
                p.next()
                continue
            break
        if not p.at_end():
            p.error("trailing input after query body")
    body_vars = top_vars | {v for _, v in concept_atoms}
    for _, x, y in role_atoms:
        body_vars.update((x, y))
    for v in head:
        if v not in body_vars:
            raise ParseError(f"head variable {v!r} absent from body", 1, 1)
    return make_cq(tuple(head), concept_atoms, role_atoms, top_vars)


def serialize_cq(q: ConjunctiveQuery) -> str:
    return q.text()
