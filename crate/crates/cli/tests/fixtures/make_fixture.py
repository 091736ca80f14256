#!/usr/bin/env python3
"""Regenerates trips_100.csv and its expected ingest-stats output.

The expected statistics are computed here, independently of the Rust code:
haversine on a sphere of radius 6371008.8 m, lower medians, three decimals.
"""
import csv
import math
import random
from pathlib import Path

R = 6371008.8
HERE = Path(__file__).resolve().parent
MODES = ["vehicle", "pedestrian", "unknown"]
CLASSES = ["0-14", "14-26", "26+", "unknown"]
PROVIDERS = ["fleet", "consumer", "unknown"]


def haversine(a, b):
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    dp = p2 - p1
    dl = math.radians(b[1] - a[1])
    s1 = math.sin(dp / 2)
    s2 = math.sin(dl / 2)
    h = s1 * s1 + math.cos(p1) * math.cos(p2) * s2 * s2
    return 2 * R * math.asin(math.sqrt(min(h, 1.0)))


def lower_median(xs):
    xs = sorted(xs)
    return xs[(len(xs) - 1) // 2]


def make_trips(rng):
    trips = []
    for i in range(100):
        tid = f"t{i:03d}"
        if i == 17:
            tid = "t017,quoted"
        n = rng.choice([2, 3, 4, 7, 12, 25, 60])
        lat = rng.uniform(-60, 70)
        lon = rng.uniform(-179, 179)
        t = 1_444_003_200_000 + rng.randrange(0, 86_400_000)
        heading = rng.uniform(0, 2 * math.pi)
        pts = []
        for k in range(n):
            pts.append((round(lat, 7), round(lon, 7), t))
            # Some trips repeat a timestamp or stand still.
            t += rng.choice([0, 1000, 1000, 2000, 5000, 30000, 61_234])
            step = rng.choice([0.0, 3.0, 15.0, 120.0, 900.0]) / 111_000
            heading += rng.gauss(0, 0.4)
            lat = max(-89.9, min(89.9, lat + step * math.cos(heading)))
            lon += step * math.sin(heading) / max(0.1, math.cos(math.radians(lat)))
            lon = (lon + 180) % 360 - 180
        trips.append((tid, f"d{rng.randrange(20)}", rng.choice(MODES), rng.choice(CLASSES), rng.choice(PROVIDERS), pts))
    return trips


def stats(pts):
    length = 0.0
    spacings, lapses = [], []
    for a, b in zip(pts, pts[1:]):
        d = haversine(a, b)
        length += d
        spacings.append(d)
        lapses.append(b[2] - a[2])
    return (
        (pts[-1][2] - pts[0][2]) / 1000,
        length,
        len(pts),
        lower_median(lapses) / 1000,
        lower_median(spacings),
    )


def main():
    rng = random.Random(20151004)
    trips = make_trips(rng)
    rows = []
    for tid, dev, mode, wc, prov, pts in trips:
        for lat, lon, t in pts:
            rows.append([tid, dev, mode, wc, prov, f"{lat:.7f}", f"{lon:.7f}", str(t)])
    # Records the reader must reject: one waypoint, time going backwards,
    # latitude out of range.
    rows.append(["bad1", "d0", "vehicle", "unknown", "fleet", "10.0000000", "10.0000000", "1444003200000"])
    rows += [["bad2", "d0", "vehicle", "unknown", "fleet", "10.0", "10.0", t] for t in ["1444003205000", "1444003200000"]]
    rows += [["bad3", "d0", "vehicle", "unknown", "fleet", lat, "10.0", t] for lat, t in [("91.5", "1444003200000"), ("10.0", "1444003201000")]]
    with open(HERE / "trips_100.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trip_id", "device_id", "mode", "weight_class", "provider", "lat", "lon", "t_ms"])
        w.writerows(rows)

    with open(HERE / "trip_stats.golden.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trip_id", "duration_s", "length_m", "n_waypoints", "median_lapse_s", "median_spacing_m"])
        for tid, _, _, _, _, pts in trips:
            # Stats use the coordinates as written to the CSV.
            pts = [(float(f"{a:.7f}"), float(f"{b:.7f}"), t) for a, b, t in pts]
            dur, length, n, lapse, spacing = stats(pts)
            w.writerow([tid, f"{dur:.3f}", f"{length:.3f}", n, f"{lapse:.3f}", f"{spacing:.3f}"])


if __name__ == "__main__":
    main()
