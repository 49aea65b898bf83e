#!/usr/bin/env python3
"""Rubric arithmetic fixtures: driving score products and penalty products."""
from fractions import Fraction as F

COEFF = {"collision_pedestrian": F(1, 2), "collision_vehicle": F(3, 5),
         "collision_static": F(13, 20), "red_light": F(7, 10), "stop_sign": F(4, 5)}


def penalty(kinds):
    p = F(1)
    for k in kinds:
        p *= COEFF[k]
    return p


if __name__ == "__main__":
    print("driving_score(85.63, 0.855) =", float(F("85.63") * F("0.855")))
    print("driving_score(89.36, 0.866) =", float(F("89.36") * F("0.866")))
    print("penalty([red_light, stop_sign]) =", float(penalty(["red_light", "stop_sign"])))
    print("penalty([pedestrian, pedestrian]) =",
          float(penalty(["collision_pedestrian", "collision_pedestrian"])))
    # Two runs: penalties {1, 0.56}, completions {100, 50}.
    g = (F(1) + F(56, 100)) / 2 * (F(100) + F(50)) / 2
    print("aggregate two-run global =", float(g))
