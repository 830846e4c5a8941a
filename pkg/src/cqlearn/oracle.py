"""The teacher: membership and equivalence queries, transcripts, budgets.

The simulated oracle holds the (raw) ontology and target query; it evaluates
everything over an internally normalized copy, which agrees with the raw
ontology on the shared signature.  Counterexamples are the canonical ABoxes of
the frontier queries, which the homomorphism lemma certifies as valid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .analysis import query_in_class
from .errors import ArityError, BudgetExceededError, ClassViolationError
from .normalization import normalize_ontology
from .reasoning import contained_in, holds, saturate
from .syntax import (
    ABox,
    ConjunctiveQuery,
    Named,
    Ontology,
    individual_key,
    parse_abox,
    cq_to_abox,
    make_abox,
    serialize_abox,
    spell,
)

_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")


def token_size(text: str) -> int:
    return len(_TOKEN_RE.findall(text))


def abox_size(abox: ABox, answer_tuple=()) -> int:
    return token_size(abox.text()) + len(answer_tuple)


@dataclass(frozen=True)
class Counterexample:
    abox: ABox
    answer_tuple: tuple
    polarity: str  # "positive" | "negative"

    def restricted(self, sigma) -> "Counterexample":
        from .normalization import restrict_to_signature

        return Counterexample(
            restrict_to_signature(self.abox, sigma), self.answer_tuple, self.polarity
        )

    def inline(self) -> dict:
        return {
            "abox": self.abox.text(),
            "tuple": [spell(a) for a in self.answer_tuple],
            "polarity": self.polarity,
        }


class Transcript:
    """Append-only record of oracle traffic with running counters."""

    def __init__(self):
        self.records = []
        self.membership_count = 0
        self.equivalence_count = 0
        self.total_query_size = 0
        self.largest_counterexample = 0

    def record(self, kind, size, answer, counterexample=None):
        entry = {
            "seq": len(self.records),
            "kind": kind,
            "size": size,
            "answer": answer,
        }
        if counterexample is not None:
            entry["counterexample"] = counterexample.inline()
            self.largest_counterexample = max(
                self.largest_counterexample, abox_size(counterexample.abox)
            )
        self.records.append(entry)
        if kind == "membership":
            self.membership_count += 1
            self.total_query_size += size
        elif kind == "equivalence":
            self.equivalence_count += 1
            self.total_query_size += size
        return entry

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r, sort_keys=True) + "\n" for r in self.records
        )

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @staticmethod
    def read(path) -> list:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def stats(self) -> dict:
        return {
            "membership_queries": self.membership_count,
            "equivalence_queries": self.equivalence_count,
            "total_query_size": self.total_query_size,
            "largest_counterexample": self.largest_counterexample,
        }


@dataclass
class OracleConfig:
    counterexample_mode: str = "none"  # none | saturate | minimized
    max_calls: int | None = None
    audit: bool = True  # verify every counterexample against both queries
    query_class: str = "cq"  # class enforced on class-restricted equivalence


class SimulatedOracle:
    """Teacher holding (ontology, target query) and answering faithfully."""

    def __init__(self, ontology: Ontology, target: ConjunctiveQuery, config=None,
                 transcript=None):
        self.config = config or OracleConfig()
        self.raw_ontology = ontology
        if ontology.is_normal_form:
            self.ontology = ontology
        else:
            sigma = ontology.signature | target.signature
            self.ontology = normalize_ontology(ontology, sigma).normalized
        self.target = target
        self.transcript = transcript if transcript is not None else Transcript()
        if not query_in_class(target, self.config.query_class):
            raise ClassViolationError(
                f"target query is not in class {self.config.query_class!r}"
            )
        self._target_abox, self._target_tuple = cq_to_abox(target)

    @property
    def arity(self) -> int:
        return self.target.arity

    def _charge(self):
        limit = self.config.max_calls
        if limit is not None:
            used = self.transcript.membership_count + self.transcript.equivalence_count
            if used >= limit:
                raise BudgetExceededError(f"oracle budget of {limit} calls exhausted")

    def membership(self, abox: ABox, answer_tuple) -> bool:
        if len(answer_tuple) != self.arity:
            raise ArityError(
                f"membership tuple arity {len(answer_tuple)}, target {self.arity}"
            )
        self._charge()
        answer = holds(abox, self.ontology, self.target, tuple(answer_tuple))
        self.transcript.record("membership", abox_size(abox, answer_tuple), answer)
        return answer

    def equivalence(self, q: ConjunctiveQuery, mode="class-restricted"):
        """None if equivalent to the target, else a counterexample."""
        if q.arity != self.arity:
            raise ArityError(f"hypothesis arity {q.arity}, target {self.arity}")
        if mode == "class-restricted" and not query_in_class(q, self.config.query_class):
            raise ClassViolationError(
                f"hypothesis outside class {self.config.query_class!r} "
                "in class-restricted mode"
            )
        self._charge()
        size = token_size(q.text())
        if not contained_in(self.target, q, self.ontology):
            cex = self._make_counterexample(self._target_abox, self._target_tuple,
                                            "positive", q)
        elif not contained_in(q, self.target, self.ontology):
            hyp_abox, hyp_tuple = cq_to_abox(q)
            cex = self._make_counterexample(hyp_abox, hyp_tuple, "negative", q)
        else:
            self.transcript.record("equivalence", size, "equivalent")
            return None
        self.transcript.record("equivalence", size, "counterexample", cex)
        return cex

    def _make_counterexample(self, abox, answer_tuple, polarity, hypothesis):
        abox = self._postprocess(abox, answer_tuple, polarity, hypothesis)
        cex = Counterexample(abox, answer_tuple, polarity)
        if self.config.audit:
            self._audit(cex, hypothesis)
        return cex

    def _postprocess(self, abox, answer_tuple, polarity, hypothesis):
        mode = self.config.counterexample_mode
        if mode == "saturate":
            return saturate(abox, self.ontology)
        if mode == "minimized":
            return self._shrink(abox, answer_tuple, polarity, hypothesis)
        return abox

    def _shrink(self, abox, answer_tuple, polarity, hypothesis):
        """Greedily drop individuals while the counterexample stays valid."""
        keep = set(answer_tuple)
        passing, failing = (
            (self.target, hypothesis) if polarity == "positive"
            else (hypothesis, self.target)
        )
        current = abox
        for a in sorted(abox.universe, key=individual_key):
            if a in keep:
                continue
            reduced = make_abox(
                {(n, b) for n, b in current.concept_assertions if b != a},
                {
                    (r, b, c)
                    for r, b, c in current.role_assertions
                    if a not in (b, c)
                },
                (current.extra_individuals - {a}) | keep,
            )
            if a not in reduced.universe and holds(
                reduced, self.ontology, passing, answer_tuple
            ) and not holds(reduced, self.ontology, failing, answer_tuple):
                current = reduced
        return current

    def _audit(self, cex, hypothesis):
        on_target = holds(cex.abox, self.ontology, self.target, cex.answer_tuple)
        on_hyp = holds(cex.abox, self.ontology, hypothesis, cex.answer_tuple)
        expected = (True, False) if cex.polarity == "positive" else (False, True)
        if (on_target, on_hyp) != expected:
            raise AssertionError(
                f"unsound {cex.polarity} counterexample: target={on_target}, "
                f"hypothesis={on_hyp}"
            )


def make_simulated_oracle(ontology, target, config=None, transcript=None):
    return SimulatedOracle(ontology, target, config, transcript)


class ReplayOracle:
    """Re-answers a recorded session; the query sequence must line up."""

    def __init__(self, records, arity):
        self.records = [r for r in records if r["kind"] in ("membership", "equivalence")]
        self.pos = 0
        self.arity = arity

    def _next(self, kind):
        if self.pos >= len(self.records):
            raise BudgetExceededError("replay transcript exhausted")
        rec = self.records[self.pos]
        if rec["kind"] != kind:
            raise AssertionError(
                f"replay divergence at seq {rec['seq']}: expected {rec['kind']}, "
                f"got {kind}"
            )
        self.pos += 1
        return rec

    def membership(self, abox, answer_tuple) -> bool:
        return self._next("membership")["answer"]

    def equivalence(self, q, mode="class-restricted"):
        rec = self._next("equivalence")
        if rec["answer"] == "equivalent":
            return None
        data = rec["counterexample"]
        return Counterexample(
            parse_abox(data["abox"]),
            tuple(Named(n) for n in data["tuple"]),
            data["polarity"],
        )
