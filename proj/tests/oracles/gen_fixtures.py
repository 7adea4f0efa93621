"""Independent oracles for frozen test values.

Re-implements std::mt19937_64 from its published recurrence, plus the
library's documented uniform/gaussian transforms, and lays out the two-record
EMBD fixture byte by byte. Run it to regenerate the constants pinned in
tests/test_numerics.cpp and tests/fixtures/two_records.embd.
"""
import math
import struct
import sys
import zlib
from pathlib import Path


class MT19937_64:
    W, N, M, R = 64, 312, 156, 31
    A = 0xB5026F5AA96619E9
    U, D = 29, 0x5555555555555555
    S, B = 17, 0x71D67FFFEDA60000
    T, C = 37, 0xFFF7EEE000000000
    L = 43
    F = 6364136223846793005
    MASK = (1 << 64) - 1
    LOWER = (1 << R) - 1
    UPPER = MASK & ~LOWER

    def __init__(self, seed):
        self.mt = [0] * self.N
        self.mt[0] = seed & self.MASK
        for i in range(1, self.N):
            prev = self.mt[i - 1]
            self.mt[i] = (self.F * (prev ^ (prev >> (self.W - 2))) + i) & self.MASK
        self.index = self.N

    def twist(self):
        for i in range(self.N):
            x = (self.mt[i] & self.UPPER) | (self.mt[(i + 1) % self.N] & self.LOWER)
            xa = x >> 1
            if x & 1:
                xa ^= self.A
            self.mt[i] = self.mt[(i + self.M) % self.N] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= self.N:
            self.twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> self.U) & self.D
        y ^= (y << self.S) & self.B
        y ^= (y << self.T) & self.C
        y ^= y >> self.L
        return y & self.MASK


def uniform(eng):
    return (eng() >> 11) * 2.0 ** -53


def gaussians(eng, n):
    out = []
    while len(out) < n:
        u1 = uniform(eng)
        while u1 <= 0.0:
            u1 = uniform(eng)
        u2 = uniform(eng)
        r = math.sqrt(-2.0 * math.log(u1))
        a = 2.0 * math.pi * u2
        out += [r * math.cos(a), r * math.sin(a)]
    return out[:n]


def embd_fixture():
    dim = 3
    classes = ["cat", "dog"]
    records = [
        ("a", 0, [1.0, 2.0, 3.0], [[0.5, 0.25, -1.0], [2.0, 0.0, 0.0]]),
        ("b", 1, [-4.0, 0.125, 8.0], [[-1.5, 4.0, 0.125]]),
    ]
    payload = b""
    for name in classes:
        payload += struct.pack("<H", len(name)) + name.encode()
    for sid, label, img, texts in records:
        payload += struct.pack("<H", len(sid)) + sid.encode()
        payload += struct.pack("<IB", label, len(texts))
        payload += struct.pack("<%df" % dim, *img)
        for t in texts:
            payload += struct.pack("<%df" % dim, *t)
    header = b"EMBD" + struct.pack("<HIIQI", 1, dim, len(classes), len(records), zlib.crc32(payload))
    return header + payload


def main():
    eng = MT19937_64(5489)
    for _ in range(9999):
        eng()
    print("mt19937_64 default seed, 10000th:", eng())
    eng = MT19937_64(7)
    print("seed 7 first three u64:", [eng() for _ in range(3)])
    eng = MT19937_64(7)
    print("seed 7 first three uniform:", [repr(uniform(eng)) for _ in range(3)])
    eng = MT19937_64(7)
    print("seed 7 first four gaussian:", [repr(g) for g in gaussians(eng, 4)])
    data = embd_fixture()
    print("fixture bytes (%d):" % len(data))
    print(", ".join("0x%02x" % b for b in data))
    if len(sys.argv) > 1:
        Path(sys.argv[1]).write_bytes(data)


if __name__ == "__main__":
    main()
