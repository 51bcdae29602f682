"""Show how scattered DRAM access inflates cost versus burst reads.

Prints the random-vs-burst cycle ratio over a range of transfer sizes
(converging to 1 + row_change_factor), then costs one concrete word set
in scattered and sorted order.

Usage: python3 scripts/dram_asymmetry.py
"""

import argparse
import sys

from sparsebench.memmodel import MemConfig, cost_trace, random_vs_burst_ratio
from sparsebench.synth import make_rng
from sparsebench.trace import AccessTrace


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--words", type=int, default=4096,
                    help="size of the concrete demo word set")
    args = ap.parse_args(argv)

    cfg = MemConfig()
    print("n_words,random_vs_burst_ratio")
    for n in (10, 100, 1_000, 10_000, 100_000, 1_000_000):
        print(f"{n},{random_vs_burst_ratio(n, cfg):.4f}")

    rng = make_rng(args.seed)
    addrs = rng.integers(0, 64 * cfg.words_per_row, args.words).tolist()

    def cycles(order):
        t = AccessTrace()
        for a in order:
            t.add("DRAM", "read", "weights", int(a), 1)
        return cost_trace(t, cfg)

    scattered = cycles(addrs)
    ordered = cycles(sorted(addrs))
    print(f"\n{args.words} single-word reads over 64 rows:")
    print(f"scattered order: {scattered.cycles} cycles, "
          f"{scattered.row_activations} row activations")
    print(f"sorted order:    {ordered.cycles} cycles, "
          f"{ordered.row_activations} row activations")
    print(f"sorting saves {scattered.cycles / ordered.cycles:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
