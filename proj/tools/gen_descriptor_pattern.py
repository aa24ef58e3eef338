#!/usr/bin/env python3
"""Regenerate src/descriptor_pattern.inc.

The binary descriptor compares 256 point pairs (512 points) drawn uniformly
from the integer lattice inside a disk of radius 13 around the keypoint.
Points come from a splitmix64 stream seeded with 0x5EED0F0B5EED0F0B using
rejection sampling; a pair whose two points coincide is redrawn.  Only integer
arithmetic is involved, so tests/test_registration.cpp re-derives the table
bit-for-bit in C++.
"""

import sys

SEED = 0x5EED0F0B5EED0F0B
RADIUS = 13
PAIRS = 256
MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)


def draw_point(rng):
    span = 2 * RADIUS + 1
    while True:
        v = rng.next()
        x = (v & 0xFFFFFFFF) % span - RADIUS
        y = (v >> 32) % span - RADIUS
        if x * x + y * y <= RADIUS * RADIUS:
            return x, y


def main():
    rng = SplitMix64(SEED)
    pairs = []
    while len(pairs) < PAIRS:
        a = draw_point(rng)
        b = draw_point(rng)
        if a != b:
            pairs.append((a, b))
    out = sys.stdout
    out.write("// Generated by tools/gen_descriptor_pattern.py (seed 0x5EED0F0B5EED0F0B). Do not edit.\n")
    out.write("// {ax, ay, bx, by} per descriptor bit.\n")
    for (ax, ay), (bx, by) in pairs:
        out.write(f"{{{ax}, {ay}, {bx}, {by}}},\n")


if __name__ == "__main__":
    main()
