"""Checker tests: the program corpus plus targeted unit cases."""

import json
import pathlib

import pytest

from joinstate.checker import check_program
from joinstate.desugar import load_program

PROGRAMS = pathlib.Path(__file__).resolve().parent.parent / "programs"
MANIFEST = json.loads((PROGRAMS / "manifest.json").read_text())


def check_source(src):
    return check_program(load_program(src))


def check_file(rel):
    path = PROGRAMS / rel
    return check_program(load_program(path.read_text(), str(path)))


class TestCorpus:
    @pytest.mark.parametrize("rel", MANIFEST["accepted"])
    def test_accepted(self, rel):
        report = check_file(rel)
        assert report.verdict == "accepted", [str(d) for d in report.diagnostics]

    @pytest.mark.parametrize("rel,code", sorted(MANIFEST["rejected"].items()))
    def test_rejected_with_expected_code(self, rel, code):
        report = check_file(rel)
        assert report.verdict == "rejected"
        assert set(report.codes()) == {code}, [str(d) for d in report.diagnostics]

    def test_report_json_shape(self):
        report = check_file("accepted/future-user.cob")
        data = report.to_json()
        assert data["verdict"] == "accepted"
        assert data["diagnostics"] == []
        names = {o["name"].split("#")[0] for o in data["objects"]}
        assert {"future", "user"} <= names
        future = next(o for o in data["objects"] if o["name"].startswith("future"))
        assert future["live"] is True
        assert {"EMPTY": 1, "Resolve": 1} in future["patterns"]
        assert isinstance(data["boundedSubtypeUses"], list)


class TestProtocolViolations:
    def test_unused_relevant_object_is_an_unmet_obligation(self):
        report = check_source("new obj : A [ A |> obj!A ] in done")
        assert report.codes() == ["ObligationUnmet"]

    def test_unused_nullable_object_is_fine(self):
        report = check_source("new obj : 1 + A [ A |> done ] in done")
        assert report.verdict == "accepted"

    def test_reaction_must_restore_the_protocol(self):
        # Consuming an A without re-sending one leaves the object short.
        report = check_source(
            "new obj : *A · B [ A & B |> done | A |> done ] in obj!A & obj!B"
        )
        assert "ProtocolViolation" in report.codes()

    def test_wrong_argument_kind(self):
        report = check_source("new obj : A(#Number) [ A(x) |> done ] in obj!A(obj)")
        assert "ProtocolViolation" in report.codes()

    def test_arity_mismatch(self):
        report = check_source("new obj : A(#Number) [ A(x) |> done ] in obj!A")
        assert "AritySumError" in report.codes()

    def test_rule_using_outer_object_rejected(self):
        report = check_source(
            "new a : A · B(1) [ A |> done | B(x) |> done ] in"
            " new b : C [ C |> a!A ] in b!C & a!B(b)"
        )
        assert "ProtocolViolation" in report.codes()


class TestLiveness:
    def test_unhandled_branch_with_relevant_argument(self):
        # A configuration holding an A never triggers the only rule, and A
        # carries an object that would be stuck forever.
        report = check_source(
            "new obj : A(Reply(#Number)) + B [ B |> done ] in obj!B"
        )
        assert "NotLive" in report.codes()

    def test_unhandled_branch_without_arguments_is_live(self):
        report = check_source("new obj : A + B [ B |> done ] in obj!B")
        assert "NotLive" not in report.codes()


class TestRuleDiagnostics:
    def test_dead_rule(self):
        report = check_source(
            "new obj : A [ A |> done | B |> done ] in obj!A"
        )
        assert "DeadReaction" in report.codes()

    def test_ambiguous_pattern(self):
        report = check_source(
            "new aux : 1 + B [ B |> done ] in"
            " new obj : A · M(B) + M(C) [ M(x) |> x!B | A & M(x) |> x!B ]"
            " in obj!A & obj!M(aux)"
        )
        assert "AmbiguousArgs" in report.codes()

    def test_unusable_argument_type(self):
        report = check_source(
            "new obj : A(0) [ A(x) |> done ] in done"
        )
        assert "UnusableArg" in report.codes()


class TestContinuationTyping:
    FUTURE = (PROGRAMS / "accepted" / "future-class.cob").read_text()

    def test_closure_argument_gets_principal_usage(self):
        src = self.FUTURE.replace(
            "future!Resolve(42) & System!Print(future.Get) & System!Print(future.Get)",
            "future!Resolve(42) & System!Print(future.Get)",
        )
        report = check_program(load_program(src))
        assert report.verdict == "accepted", [str(d) for d in report.diagnostics]
        conts = [
            o for o in report.objects if o.name.text == "cont" and not o.stateless
        ]
        assert conts and all(o.live for o in conts)

    def test_sync_result_must_be_consumed(self):
        # The generator hands back a fresh source that is never drained.
        src = """
        type #Get   = Get(#Reply)
        and  #Reply = Reply(#Number, #Get)

        class Generator [
          New(n: #Number, r: Reply(#Get)) |>
            new this : FROM(#Number) · #Get [
              FROM(n) & Get(target) |> this!FROM(n + 1) & target!Reply(n, this)
            ] in this!FROM(n) & r!Reply(this)
        ]
        let g = Generator.New(2) in
        let n, rest = g.Get in System!Print(n)
        """
        report = check_program(load_program(src))
        assert "ObligationUnmet" in report.codes()
