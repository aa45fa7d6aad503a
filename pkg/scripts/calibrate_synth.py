#!/usr/bin/env python3
"""Calibration sweep behind the constants in squint.synth.

Three stages:
  1. pairwise template NCC (the glyph-distinctness check),
  2. oracle score bounds: the lowest best-score over alpha=1 composites vs the
     highest best-score over pure carriers; any threshold between the two has
     a false no-illusion rate of 0 on the calibration set,
  3. an alpha sweep of the filtered-vs-unfiltered oracle study to locate the
     band where the filter's benefit is widest.

Rerun after changing glyph shapes or carrier octaves, then update
DEFAULT_ORACLE_THRESHOLD / DEFAULT_STUDY_ALPHA to match.
"""

import argparse

import numpy as np

from squint import synth
from squint.synth import SynthSpec, benefit_study, template_bank


def ncc_matrix() -> None:
    bank = template_bank(10)
    names = bank.class_names
    print("pairwise template NCC (off-diagonal must stay < 0.9):")
    worst = (-1.0, "", "")
    for i in range(len(names)):
        row = []
        for j in range(len(names)):
            v = float(np.mean(bank.normalized[i] * bank.normalized[j]))
            row.append(f"{v:5.2f}")
            if i != j and v > worst[0]:
                worst = (v, names[i], names[j])
        print(f"  {names[i]:>14} " + " ".join(row))
    print(f"  worst pair: {worst[1]} vs {worst[2]} at {worst[0]:.3f}\n")


def threshold_bounds(seed: int, samples: int) -> None:
    bank = template_bank(10)
    lo, hi = 1.0, 0.0
    misclassified = 0
    for i in range(samples):
        cls = i % 10
        s = synth.splitmix64(seed, i)
        carrier = synth.render_carrier(128, 3.0, synth.splitmix64(s, 101))
        concept = synth.render_concept(cls, 128, synth.splitmix64(s, 202))
        comp = synth.compose_illusion(concept, carrier, 1.0)
        scores = synth.oracle_scores(comp, bank)
        lo = min(lo, float(scores.max()))
        misclassified += int(np.argmax(scores)) != cls
        hi = max(hi, float(synth.oracle_scores(carrier, bank).max()))
    print(f"alpha=1 best-score minimum: {lo:.3f} (misclassified: {misclassified})")
    print(f"carrier best-score maximum: {hi:.3f}")
    print(f"usable threshold band: ({hi:.3f}, {lo:.3f}); "
          f"current default {synth.DEFAULT_ORACLE_THRESHOLD}\n")


def alpha_sweep(seed: int, n: int) -> None:
    print(f"alpha sweep, n={n} per point, threshold={synth.DEFAULT_ORACLE_THRESHOLD}:")
    print(f"  {'alpha':>6} {'raw':>7} {'filtered':>9} {'gap':>7}")
    for alpha in (0.05, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20, 0.25, 0.30):
        spec = SynthSpec(alpha=alpha, seed=seed)
        res = benefit_study(spec, n)
        print(f"  {alpha:>6.2f} {res.unfiltered_accuracy:>7.1f} "
              f"{res.filtered_accuracy:>9.1f} {res.gap:>7.1f}")
    print(f"  current default alpha: {synth.DEFAULT_STUDY_ALPHA}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=20250801)
    parser.add_argument("--samples", type=int, default=60,
                        help="samples per calibration stage")
    args = parser.parse_args()
    ncc_matrix()
    threshold_bounds(args.seed, args.samples)
    alpha_sweep(args.seed, args.samples)


if __name__ == "__main__":
    main()
