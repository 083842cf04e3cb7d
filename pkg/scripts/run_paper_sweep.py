"""Full lambda sweep with the default parameters, then a summary table.

    python scripts/run_paper_sweep.py --out runs/paper [--threads 5]
"""

import argparse
import time

from spinbath.runner import RunConfig, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/paper")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    cfg = RunConfig.paper(out_dir=args.out, threads=args.threads)
    t0 = time.perf_counter()
    manifest = run_experiment(cfg)
    print(f"sweep finished in {(time.perf_counter() - t0) / 60:.1f} min -> {args.out}")
    print(f"{'lambda':>6} {'S_late':>9} {'max|dZ|':>9} {'rms dX':>9} {'rms dY':>9} {'rms dZ':>9} {'steps':>6} {'drift':>8}")
    for row in manifest.summary:
        info = manifest.lambdas[f"{row['lambda']:g}"]["integration"]
        print(
            f"{row['lambda']:6g} {row['S_late_mean']:9.5f} {row['max_abs_dZ']:9.5f} {row['rms_dX']:9.5f} "
            f"{row['rms_dY']:9.5f} {row['rms_dZ']:9.5f} {info['steps']:6d} {info['max_norm_drift']:8.1e}"
        )


if __name__ == "__main__":
    main()
