"""Scenario runner: execute a checked-in config and compare against its expected-values file.

An expected file ``<name>.expected.json`` holds ``{"checks": [...]}``; each
check names an output ``file`` and one of

- ``path`` (dotted JSON path) with ``value`` and ``rel_tol`` / ``abs_tol`` /
  ``factor``, or with ``min`` and/or ``max``, or with a bare boolean ``value``;
- ``header``: the first CSV line must equal this string;
- ``exists``: the file must be present.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .cli import run


@dataclass(frozen=True)
class CheckResult:
    check: dict
    ok: bool
    actual: object

    def describe(self) -> str:
        c = self.check
        target = c.get("path") or ("header" if "header" in c else "exists")
        return f"{c['file']}:{target} actual={self.actual!r}"


def scenario_names(directory) -> list[str]:
    return sorted(p.stem for p in Path(directory).glob("*.cfg"))


def run_scenario(config, out, seed: int | None = None) -> dict:
    argv = ["run", "--config", str(config), "--out", str(out)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return run(argv)


def _lookup(data, dotted: str):
    for part in dotted.split("."):
        data = data[int(part)] if isinstance(data, list) else data[part]
    return data


def _judge(check: dict, actual) -> bool:
    if isinstance(check.get("value"), bool):
        return actual is check["value"]
    if "min" in check or "max" in check:
        lo, hi = check.get("min", -math.inf), check.get("max", math.inf)
        return lo <= actual <= hi
    v = check["value"]
    if "factor" in check:
        return actual > 0 and v / check["factor"] <= actual <= v * check["factor"]
    if "rel_tol" in check:
        return abs(actual - v) <= check["rel_tol"] * abs(v)
    return abs(actual - v) <= check.get("abs_tol", 0.0)


def evaluate(out, expected: dict) -> list[CheckResult]:
    out = Path(out)
    results = []
    for check in expected["checks"]:
        target = out / check["file"]
        if not target.is_file():
            results.append(CheckResult(check, False, None))
            continue
        if "exists" in check:
            results.append(CheckResult(check, True, True))
        elif "header" in check:
            with target.open() as fh:
                head = fh.readline().rstrip("\n")
            results.append(CheckResult(check, head == check["header"], head))
        else:
            try:
                actual = _lookup(json.loads(target.read_text()), check["path"])
            except (KeyError, IndexError):
                results.append(CheckResult(check, False, None))
                continue
            results.append(CheckResult(check, _judge(check, actual), actual))
    return results


def run_and_check(directory, name: str, out, seed: int | None = None) -> list[CheckResult]:
    directory = Path(directory)
    run_scenario(directory / f"{name}.cfg", out, seed)
    expected = json.loads((directory / f"{name}.expected.json").read_text())
    return evaluate(out, expected)
