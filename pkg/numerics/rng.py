"""
SplitMix64, the seeded generator behind every golden file in this repository.

Python integers are masked to 64 bits so the stream is identical on every
platform. Reference: SplitMix64(0) first output is 0xE220A8397B1DCDAF.
"""
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits"""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"randbelow needs a positive bound, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def sample_positions(self, n: int, k: int) -> list[int]:
        """k distinct positions out of range(n), partial Fisher-Yates order"""
        if not 0 <= k <= n:
            raise ValueError(f"Cannot draw {k} distinct positions out of {n}")
        pool = list(range(n))
        for t in range(k):
            j = t + self.randbelow(n - t)
            pool[t], pool[j] = pool[j], pool[t]
        return pool[:k]
