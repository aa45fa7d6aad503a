#!/usr/bin/env python3
"""Run the filtered-vs-unfiltered oracle study at the calibrated settings.

The oracle classifies each synthetic composite twice, once raw and once after
the reveal() pipeline; the accuracy gap is the filter's measured benefit.
"""

import argparse
import time

from squint.pipeline import FilterConfig
from squint.synth import SynthSpec, benefit_study


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--seed", type=int, default=20250801)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--no-illusion-fraction", type=float, default=0.0)
    parser.add_argument("--gaussian-ksize", type=int, default=61)
    args = parser.parse_args()

    kwargs = dict(class_count=args.classes, seed=args.seed,
                  no_illusion_fraction=args.no_illusion_fraction)
    if args.alpha is not None:
        kwargs["alpha"] = args.alpha
    spec = SynthSpec(**kwargs)
    cfg = FilterConfig(gaussian_ksize=args.gaussian_ksize)

    start = time.monotonic()
    result = benefit_study(spec, args.n, cfg)
    elapsed = time.monotonic() - start

    print(f"samples: {result.total}   alpha: {spec.alpha}   seed: {spec.seed}")
    print(f"{'':<12}{'unfiltered':>12}{'filtered':>12}")
    print(f"{'correct':<12}{result.unfiltered_correct:>12}{result.filtered_correct:>12}")
    print(f"{'accuracy':<12}{result.unfiltered_accuracy:>12.2f}{result.filtered_accuracy:>12.2f}")
    print(f"gap: {result.gap:.2f} percentage points   ({elapsed:.1f}s)")


if __name__ == "__main__":
    main()
