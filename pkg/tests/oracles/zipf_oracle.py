"""Standalone normalized-Zipf allocation: one record per key, the remainder
split by largest remainder of the weights (ties to the lower rank), using
exact rational arithmetic via mpmath at high precision."""
import sys
import mpmath

mpmath.mp.dps = 60


def allocate(K: int, N: int, z: float) -> list[int]:
    w = [mpmath.mpf(1) / mpmath.power(i, mpmath.mpf(str(z))) for i in range(1, K + 1)]
    total = mpmath.fsum(w)
    rest = N - K
    quotas = [rest * x / total for x in w]
    base = [int(mpmath.floor(q)) for q in quotas]
    left = rest - sum(base)
    order = sorted(range(K), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return [b + 1 for b in base]


if __name__ == "__main__":
    K, N, z = int(sys.argv[1]), int(sys.argv[2]), float(sys.argv[3])
    c = allocate(K, N, z)
    print(sum(c), max(c), c[:10], c[-5:])
