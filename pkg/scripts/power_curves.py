"""Power of the global Wald test as labs 2 and 4 drift away from the reference.

The deviation d is added to both intercept and slope of the perturbed labs.
Writes ``power.csv`` / ``power.json`` and, if matplotlib is available,
``power.png`` with one panel per regime.
"""

import argparse
from pathlib import Path

from proftest.simulation import StudyConfig, power_study


def plot(res, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed, skipping plot")
        return
    cfg = res.config
    fig, axes = plt.subplots(1, len(cfg.regimes), figsize=(4 * len(cfg.regimes), 3.2), sharey=True, squeeze=False)
    for ax, regime in zip(axes[0], cfg.regimes):
        for n in cfg.replica_counts:
            ys = [res.rate(regime, n, cfg.power_level, d)["rate"] for d in cfg.deviations]
            ax.plot(cfg.deviations, ys, marker="o", label=f"n={n}")
        ax.axhline(cfg.power_level, color="grey", lw=0.8, ls=":")
        ax.set_title(f"regime {regime}")
        ax.set_xlabel("d")
    axes[0][0].set_ylabel("rejection rate")
    axes[0][-1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replications", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240101)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--regimes", default="a,b,c")
    ap.add_argument("--deviations", default="0,0.001,0.002,0.004,0.008,0.016")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    cfg = StudyConfig(
        replications=args.replications,
        regimes=tuple(args.regimes.split(",")),
        deviations=tuple(float(d) for d in args.deviations.split(",")),
        seed=args.seed,
        workers=args.workers,
    )
    res = power_study(cfg)
    (args.out / "power.csv").write_text(res.to_csv())
    (args.out / "power.json").write_text(res.to_json())
    plot(res, args.out / "power.png")
    print(res.to_csv())


if __name__ == "__main__":
    main()
