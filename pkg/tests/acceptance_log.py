"""Collects one outcome line per acceptance criterion for the terminal summary."""

RESULTS: dict = {}


def record(number: int, title: str, status: str, detail: str = "") -> None:
    RESULTS[number] = f"criterion {number:2d} {status:7s} {title}" + (f": {detail}" if detail else "")
    print(RESULTS[number])
