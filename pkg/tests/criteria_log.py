"""Collects one verdict line per acceptance criterion for the terminal summary."""

import time

LINES = {}


def verdict(number: int, ok: bool, detail: str, started: float, limit_s: float) -> None:
    elapsed = time.perf_counter() - started
    ok = bool(ok) and elapsed < limit_s
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  [{elapsed:6.1f}s / {limit_s:g}s]  {detail}"
    LINES[number] = line
    print(line)
    assert ok, line
