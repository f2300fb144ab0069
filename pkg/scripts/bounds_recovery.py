"""How close the fitted envelope comes to the generating one on synthetic panels."""
import argparse
import warnings

import numpy as np

from ghicopula.bounds import envelope_violations, fit_bounds
from ghicopula.synth import SynthConfig, synth_panel, true_bundle, true_envelope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--years", type=int, default=7)
    args = ap.parse_args()
    cfg = SynthConfig()
    bundle = true_bundle(cfg)
    env = true_envelope(cfg)
    for seed in range(1, args.seeds + 1):
        panel = synth_panel(args.years, seed, cfg, bundle)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            b = fit_bounds(panel)
        cells = b.interior & env.daylight
        up = np.abs(b.upper[cells] / env.upper[cells] - 1)
        lo_cells = cells & (env.lower > 0)
        lo = np.abs(b.lower[lo_cells] - env.lower[lo_cells]) / env.upper[lo_cells]
        viol = envelope_violations(b, panel)
        print(f"seed {seed}: upper rel err median {np.median(up):.3f} p90 {np.quantile(up, 0.9):.3f}; "
              f"lower err / upper median {np.median(lo):.3f}; violations "
              f"{viol['below_lower'] + viol['above_upper'] + viol['upper_above_toa']}")


if __name__ == "__main__":
    main()
