"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str, seconds: float) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({seconds:.2f} s)"
    LINES.append(line)
    print(line)
