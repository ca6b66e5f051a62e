#!/usr/bin/env python3
"""Writes the small ground-heavy training corpus under data/corpus."""
import random
import sys
from pathlib import Path

H = 15


def level(seed, width):
    rng = random.Random(seed)
    g = [["-"] * width for _ in range(H)]
    x = 0
    while x < width:
        # gaps are rare and never at the edges
        if 8 < x < width - 8 and rng.random() < 0.06:
            x += rng.randint(2, 3)
            continue
        g[14][x] = "X"
        g[13][x] = "X"
        x += 1
    for _ in range(width // 16):
        bx = rng.randint(4, width - 8)
        tile = rng.choice("BB?")
        for i in range(rng.randint(2, 4)):
            g[10][bx + i] = tile if tile == "B" or i % 2 else "B"
    for _ in range(width // 25):
        px = rng.randint(6, width - 8)
        if g[14][px] != "X" or g[14][px + 1] != "X":
            continue
        top = 13 - rng.randint(2, 3)
        g[top][px], g[top][px + 1] = "<", ">"
        for y in range(top + 1, 13):
            g[y][px], g[y][px + 1] = "[", "]"
    for _ in range(width // 30):
        ex = rng.randint(10, width - 4)
        if g[13][ex] == "X" and g[12][ex] == "-":
            g[12][ex] = "g"
    for _ in range(width // 40):
        cx = rng.randint(2, width - 4)
        g[rng.randint(2, 4)][cx] = "@"
    return "\n".join("".join(r) for r in g) + "\n"


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data/corpus")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(5):
        (out / f"level_{i + 1}.txt").write_text(level(100 + i, 96 + 8 * i))


if __name__ == "__main__":
    main()
