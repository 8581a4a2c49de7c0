"""Compare the compiled matcher kernels against the pure-Python reference.

Run:  python benchmarks/bench_kernels.py

Both backends implement identical semantics (test_kernels.py holds them
to bit-for-bit agreement); this only measures the speed gap on the three
hot paths: greedy tokenization, prefix probing and composition counting.
"""

import random
import time

from heterospec.kernels import _reference

try:
    from heterospec.kernels import _core
except ImportError:
    _core = None


def build_workload(seed=7, n_texts=500, text_len=400):
    rng = random.Random(seed)
    parts = [b"a", b"b", b"c", b"ab", b"bc", b"ca", b"abc", b"bca"]
    texts = [
        b"".join(rng.choice(parts) for _ in range(text_len // 2))[:text_len]
        for _ in range(n_texts)
    ]
    return parts, texts


def bench(impl, parts, texts, repeats=3):
    matcher = impl.Matcher(parts)
    best = {}

    def timed(name, fn):
        runs = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            runs.append(time.perf_counter() - t0)
        best[name] = min(runs)

    timed("tokenize", lambda: [matcher.tokenize_ids(t) for t in texts])
    timed("prefix_probe", lambda: [
        matcher.has_token_with_prefix(t, pos)
        for t in texts[:100] for pos in range(0, len(t), 7)
    ])
    timed("compositions", lambda: [
        matcher.count_compositions(t[:64], 64, 10**7) for t in texts[:100]
    ])
    return best


def main():
    parts, texts = build_workload()
    ref = bench(_reference, parts, texts)
    print(f"{'kernel':<14} {'reference':>12} {'compiled':>12} {'speedup':>9}")
    if _core is None:
        for name, t in ref.items():
            print(f"{name:<14} {t * 1e3:>10.1f}ms {'-':>12} {'-':>9}")
        print("\ncompiled backend not built (install ran without Cython/cc)")
        return
    fast = bench(_core, parts, texts)
    for name in ref:
        ratio = ref[name] / fast[name]
        print(f"{name:<14} {ref[name] * 1e3:>10.1f}ms {fast[name] * 1e3:>10.1f}ms {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
