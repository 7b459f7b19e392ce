"""Junit XML report parsing and report-file name classification."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from xml.etree import ElementTree

from .errors import MalformedXml, NameMismatch

log = logging.getLogger(__name__)


class Verdict(enum.Enum):
    PASSED = "Passed"
    FAILED = "Failed"
    ERROR = "Error"
    SKIPPED = "Skipped"


class Order(enum.Enum):
    SAME = "same"
    RANDOM = "random"


@dataclass(frozen=True)
class TestId:
    """Identity of one test across runs: file, class path, base name, params."""

    file: str
    classname: str
    name: str
    parametrization: str = ""


@dataclass(frozen=True)
class RunRecord:
    """One test outcome observed in one run of one iteration."""

    test: TestId
    verdict: Verdict
    iteration_key: tuple[str, int]
    order: Order
    run_index: int


REPORT_NAME_RE = re.compile(r"^(?P<project>.+)_output(?P<index>\d+)\.xml$")


def split_parametrization(name: str) -> tuple[str, str]:
    """Split 'test_foo[a-b]' into ('test_foo', '[a-b]').

    Only a bracket suffix counts; names without a trailing ']' are returned
    whole with an empty parametrization.
    """
    if name.endswith("]"):
        start = name.find("[")
        if start != -1:
            return name[:start], name[start:]
    return name, ""


def derive_file_from_classname(classname: str) -> str:
    """Best-effort module path from a dotted classname.

    'tests.test_api.TestThing' -> 'tests/test_api.py'. CamelCase trailing
    segments are treated as class names and dropped.
    """
    parts = classname.split(".") if classname else []
    while parts and parts[-1][:1].isupper():
        parts.pop()
    if not parts:
        return ""
    return "/".join(parts) + ".py"


def parse_junit_xml(data: bytes | str) -> list[tuple[TestId, Verdict]]:
    """Extract (TestId, Verdict) pairs from one junit report, document order.

    Child precedence per testcase: error > failure > skipped > passed.
    A duplicated TestId within one report logs a warning and the last
    occurrence's verdict wins (keeping the first occurrence's position).
    """
    try:
        root = ElementTree.fromstring(data)
    except ElementTree.ParseError as exc:
        raise MalformedXml(f"unparseable junit report: {exc}") from exc

    if root.tag == "testsuites":
        suites = list(root.iter("testsuite"))
    elif root.tag == "testsuite":
        suites = [root]
    else:
        raise MalformedXml(f"unexpected root element <{root.tag}>")

    results: dict[TestId, Verdict] = {}
    for suite in suites:
        for case in suite.iter("testcase"):
            classname = case.get("classname", "") or ""
            raw_name = case.get("name", "") or ""
            file_attr = case.get("file", "") or derive_file_from_classname(classname)
            base_name, params = split_parametrization(raw_name)
            test = TestId(
                file=file_attr,
                classname=classname,
                name=base_name,
                parametrization=params,
            )
            verdict = Verdict.PASSED
            tags = {child.tag for child in case}
            if "error" in tags:
                verdict = Verdict.ERROR
            elif "failure" in tags:
                verdict = Verdict.FAILED
            elif "skipped" in tags:
                verdict = Verdict.SKIPPED
            if test in results:
                log.warning("duplicate test id in report: %s::%s%s", test.file, test.name, test.parametrization)
            results[test] = verdict
    return list(results.items())


def classify_run_order(filename: str, num_runs: int) -> tuple[Order, int]:
    """Map a report file name to (order, global run index).

    Indices below num_runs are declared-order runs; the rest are shuffled
    runs. Raises NameMismatch for names outside the report naming scheme.
    """
    match = REPORT_NAME_RE.fullmatch(filename)
    if match is None:
        raise NameMismatch(f"not a test report name: {filename!r}")
    index = int(match.group("index"))
    order = Order.SAME if index < num_runs else Order.RANDOM
    return order, index
