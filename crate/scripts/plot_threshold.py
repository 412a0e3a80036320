#!/usr/bin/env python3
"""Plot p_hat with Wilson intervals against the predicted curve from a sweep CSV."""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--out", default="threshold.png")
    args = ap.parse_args()

    df = pd.read_csv(args.csv).sort_values("c")
    c = np.linspace(df["c"].min() - 0.5, df["c"].max() + 0.5, 200)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(c, np.exp(-np.exp(c)), color="black", lw=1, label="exp(-exp(c))")
    err = [df["p_hat"] - df["ci_low"], df["ci_high"] - df["p_hat"]]
    ax.errorbar(df["c"], df["p_hat"], yerr=err, fmt="o", ms=4, capsize=3, label="simulated")
    ax.set_xlabel("c")
    ax.set_ylabel("P(connected)")
    ax.set_title(f"n = {df['n'].iloc[0]}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
