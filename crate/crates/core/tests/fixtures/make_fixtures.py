"""Regenerates the synthetic CSV fixtures used by the ingest tests.

The files imitate the layout of a daily BTC price export and an OWID-style
COVID table. All values are random; nothing here is real market or
epidemiological data.
"""

import csv
import datetime as dt
import math
import random
from pathlib import Path

HERE = Path(__file__).parent
START = dt.date(2020, 12, 11)
END = dt.date(2022, 6, 21)

INDICATORS = [
    "total_cases", "new_cases", "new_cases_smoothed", "total_deaths", "new_deaths",
    "new_deaths_smoothed", "total_cases_per_million", "new_cases_per_million",
    "new_cases_smoothed_per_million", "total_deaths_per_million", "new_deaths_per_million",
    "new_deaths_smoothed_per_million", "reproduction_rate", "icu_patients",
    "icu_patients_per_million", "hosp_patients", "hosp_patients_per_million",
    "weekly_icu_admissions", "weekly_icu_admissions_per_million", "weekly_hosp_admissions",
    "weekly_hosp_admissions_per_million", "total_tests", "new_tests", "total_tests_per_thousand",
    "new_tests_per_thousand", "new_tests_smoothed", "new_tests_smoothed_per_thousand",
    "positive_rate", "tests_per_case", "total_vaccinations", "people_vaccinated",
    "people_fully_vaccinated", "total_boosters", "new_vaccinations", "new_vaccinations_smoothed",
    "total_vaccinations_per_hundred", "people_vaccinated_per_hundred",
    "people_fully_vaccinated_per_hundred", "total_boosters_per_hundred",
    "new_vaccinations_smoothed_per_million", "new_people_vaccinated_smoothed",
    "new_people_vaccinated_smoothed_per_hundred", "stringency_index", "excess_mortality",
    "excess_mortality_cumulative",
]


def dates():
    d = START
    while d <= END:
        yield d
        d += dt.timedelta(days=1)


def prices(rng):
    p = 18000.0
    with open(HERE / "btc_prices_synthetic.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["Date", "Open", "High", "Low", "Close", "Volume"])
        for d in dates():
            o = p
            p *= math.exp(rng.gauss(0.0005, 0.04))
            hi, lo = max(o, p) * 1.01, min(o, p) * 0.99
            w.writerow([d.isoformat(), f"{o:.2f}", f"{hi:.2f}", f"{lo:.2f}", f"{p:.2f}",
                        rng.randint(10**9, 10**10)])


def indicators(rng):
    locations = [("USA", "North America", "United States"), ("OWID_WRL", "", "World"),
                 ("DEU", "Europe", "Germany")]
    with open(HERE / "owid_covid_synthetic.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iso_code", "continent", "location", "date"] + INDICATORS)
        for iso, cont, loc in locations:
            level = [rng.uniform(1, 100) for _ in INDICATORS]
            for i, d in enumerate(dates()):
                row = [iso, cont, loc, d.isoformat()]
                for k, name in enumerate(INDICATORS):
                    level[k] = abs(level[k] * math.exp(rng.gauss(0, 0.05)))
                    vaccination = "vacc" in name or "booster" in name
                    if vaccination and i < 20:
                        row.append("")  # leading gap, filled with 0
                    elif name.startswith("weekly") or name.startswith("excess"):
                        row.append(f"{level[k]:.3f}" if d.weekday() == 6 else "")
                    elif loc == "World" and ("icu" in name or "hosp" in name):
                        row.append("")
                    elif rng.random() < 0.02:
                        row.append("")  # sporadic gap, forward filled
                    else:
                        row.append(f"{level[k]:.3f}")
                w.writerow(row)


if __name__ == "__main__":
    rng = random.Random(20201211)
    prices(rng)
    indicators(rng)
