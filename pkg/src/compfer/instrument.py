"""Call counters used to prove which code paths run at inference time."""

from collections import Counter

calls: Counter = Counter()


def hit(name: str) -> None:
    calls[name] += 1


def reset() -> None:
    calls.clear()
