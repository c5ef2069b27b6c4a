"""Regenerate crates/core/data/europe_500.csv.

Rejection-samples 500 points uniformly in latitude/longitude inside a
coarse outline of the European continent (mainland, British Isles,
Scandinavia, Italy, the Balkans) and attaches cos(lat) area weights.
"""
import argparse

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

# (lon, lat) vertices, deliberately coarse
MAINLAND = [
    (-9.5, 43.3), (-8.9, 37.0), (-6.0, 36.2), (-2.0, 36.8), (0.2, 38.8), (-0.3, 39.7),
    (3.2, 41.9), (4.5, 43.4), (7.5, 43.8), (10.2, 44.0), (12.4, 45.2), (13.7, 45.7),
    (19.5, 41.8), (20.0, 39.6), (21.2, 37.3), (23.0, 36.5), (24.0, 38.2), (23.0, 39.8),
    (26.0, 40.8), (28.5, 41.3), (27.7, 42.7), (28.6, 44.2), (29.7, 45.2), (30.8, 46.5),
    (33.5, 44.5), (36.5, 45.3), (38.0, 47.1), (40.0, 47.0), (40.0, 56.0), (40.0, 64.5),
    (37.0, 66.0), (33.0, 66.7), (30.0, 69.7), (28.0, 71.1), (24.0, 71.0), (18.0, 69.8),
    (14.0, 68.0), (12.3, 65.5), (10.5, 64.0), (5.1, 62.0), (5.0, 59.0), (6.6, 58.0),
    (8.1, 58.1), (10.5, 59.3), (11.5, 58.0), (12.5, 56.3), (14.3, 55.5), (16.0, 56.2),
    (18.7, 60.3), (17.5, 62.5), (21.0, 64.7), (25.3, 65.5), (25.0, 63.5), (21.3, 61.5),
    (22.8, 60.0), (28.0, 60.5), (28.0, 59.5), (23.5, 59.2), (23.5, 58.2), (21.0, 57.0),
    (21.0, 55.3), (19.5, 54.4), (14.2, 53.9), (11.0, 54.0), (10.0, 55.0), (8.6, 57.1),
    (8.1, 55.5), (8.6, 53.8), (6.0, 53.5), (4.2, 52.0), (1.6, 50.9), (-1.5, 49.7),
    (-4.7, 48.5), (-1.2, 46.0), (-1.8, 43.4),
]
ITALY = [(7.6, 44.2), (8.8, 44.4), (10.3, 43.9), (12.3, 41.7), (15.7, 40.0), (15.6, 38.0),
         (16.2, 38.0), (17.1, 39.0), (18.5, 40.2), (16.0, 41.5), (14.0, 42.7), (12.4, 44.5),
         (12.4, 45.2), (10.2, 45.8)]
BRITAIN = [(-5.7, 50.0), (1.4, 51.2), (1.7, 52.7), (0.2, 53.5), (-1.6, 55.6), (-2.0, 57.6),
           (-3.0, 58.6), (-5.0, 58.6), (-6.2, 56.7), (-4.8, 54.8), (-3.2, 54.0), (-4.6, 53.3),
           (-4.2, 52.3), (-5.3, 51.7)]
IRELAND = [(-6.0, 52.2), (-6.0, 54.0), (-7.3, 55.3), (-8.5, 54.5), (-10.0, 53.9),
           (-10.3, 51.8), (-8.5, 51.6)]
SICILY = [(12.4, 38.0), (15.6, 38.3), (15.1, 36.7)]


def outline():
    return unary_union([Polygon(p) for p in (MAINLAND, ITALY, BRITAIN, IRELAND, SICILY)])


def sample(n, seed):
    shape = outline()
    lon0, lat0, lon1, lat1 = shape.bounds
    rng = np.random.RandomState(seed)
    out = []
    while len(out) < n:
        lon = rng.uniform(lon0, lon1)
        lat = rng.uniform(lat0, lat1)
        if shape.contains(Point(lon, lat)):
            out.append((lat, lon))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="crates/core/data/europe_500.csv")
    args = ap.parse_args()
    with open(args.out, "w") as f:
        f.write("lat_deg,lon_deg,weight\n")
        for lat, lon in sample(args.n, args.seed):
            f.write(f"{lat:.6f},{lon:.6f},{np.cos(np.radians(lat)):.9f}\n")


if __name__ == "__main__":
    main()
