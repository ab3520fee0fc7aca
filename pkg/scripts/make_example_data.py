"""Regenerate the packaged example datasets under src/oufactor/data/.

Every dataset is synthetic, simulated by the package itself from the
fixed parameters written alongside each CSV, so the examples have known
ground truth. Deterministic: fixed seeds, stable float formatting.
"""

import datetime
import os

import numpy as np

from oufactor.canonical import to_canonical
from oufactor.dataio import write_params, write_series
from oufactor.params import ModelParams
from oufactor.preprocess import day_of_year, write_dated_series
from oufactor.simulate import simulate

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "oufactor", "data")


def real_eigen_example():
    # two weakly coupled factors, one fast and one slow mean reversion;
    # stated in a diagonal basis with correlated noise, stored canonically
    diagonal_form = ModelParams(
        theta=np.diag([1.0495, 0.0517]),
        loadings=np.array([[1.0060, 0.1381], [0.3248, 0.3095]]),
        obs_mean=np.array([-1.5, -2.2]),
        noise_var=np.array([0.09, 0.09]),
        diffusion=np.array([[1.0, -0.1620], [-0.1620, 1.0]]),
    )
    params, _ = to_canonical(diagonal_form)
    series, _ = simulate(params, np.arange(300.0), 101)
    write_series(os.path.join(OUT, "example_real.csv"), series,
                 labels=["genus_a", "genus_b"])
    write_params(
        os.path.join(OUT, "example_real_params.json"), params,
        info={
            "description": "generating model of example_real.csv "
                           "(synthetic; two real eigenvalues, fast and "
                           "slow mean reversion)",
            "seed": 101, "n": 300, "dt": 1.0,
        },
    )
    return series


def complex_eigen_example():
    # oscillatory pair: complex eigenvalues produce lagged cross-correlation
    params = ModelParams(
        theta=np.array([[0.9883, 0.1981], [-0.1981, 0.6960]]),
        loadings=np.array([[0.3588, 0.6064], [-0.1747, 0.6417]]),
        obs_mean=np.array([-2.0, -1.0]),
        noise_var=np.array([0.0625, 0.0625]),
    )
    series, _ = simulate(params, np.arange(250.0), 102)
    write_series(os.path.join(OUT, "example_complex.csv"), series,
                 labels=["genus_c", "genus_d"])
    write_params(
        os.path.join(OUT, "example_complex_params.json"), params,
        info={
            "description": "generating model of example_complex.csv "
                           "(synthetic; complex eigenvalue pair, lagged "
                           "cross-correlation)",
            "seed": 102, "n": 250, "dt": 1.0,
        },
    )
    return series


def counts_example(series):
    # invert the log-ratio transform on a slice of example_real.csv to get
    # a plausible raw counts table with integer abundances
    rng = np.random.default_rng(103)
    n = 150
    values = series.values[:n]
    times = series.times[:n]
    reference = rng.integers(800, 1200, size=n).astype(float)
    counts = np.maximum(
        np.rint((reference[:, None] + 0.3) * np.exp(values) - 0.3), 0.0
    )
    import csv

    path = os.path.join(OUT, "example_counts.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "genus_a", "genus_b", "reference_total"])
        for i in range(n):
            writer.writerow([
                "%.17g" % times[i],
                "%d" % counts[i, 0],
                "%d" % counts[i, 1],
                "%d" % reference[i],
            ])


def daily_example():
    # three years of daily values: smooth seasonal cycle plus factor
    # anomalies plus measurement noise, with a few missing days
    start = datetime.date(2020, 1, 1)
    dates = [start + datetime.timedelta(days=i) for i in range(1095)]
    doys = day_of_year(dates)
    clim = np.column_stack([
        14.0 + 8.0 * np.sin(2 * np.pi * (doys - 110) / 365.0),
        16.0 + 6.0 * np.sin(2 * np.pi * (doys - 120) / 365.0),
    ])
    params = ModelParams(
        theta=np.array([[0.3, 0.05], [-0.05, 0.12]]),
        loadings=np.array([[0.9, 0.3], [0.4, 0.8]]),
        obs_mean=np.zeros(2),
        noise_var=np.array([0.01, 0.01]),
    )
    anomalies, _ = simulate(params, np.arange(float(len(dates))), 104)
    values = clim + anomalies.values
    rng = np.random.default_rng(105)
    missing = rng.choice(len(dates), size=20, replace=False)
    values[missing] = np.nan
    write_dated_series(os.path.join(OUT, "example_daily.csv"), dates, values,
                       labels=["site_a", "site_b"])


def main():
    os.makedirs(OUT, exist_ok=True)
    series = real_eigen_example()
    complex_eigen_example()
    counts_example(series)
    daily_example()
    for name in sorted(os.listdir(OUT)):
        print(name, os.path.getsize(os.path.join(OUT, name)), "bytes")


if __name__ == "__main__":
    main()
