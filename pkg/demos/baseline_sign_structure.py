"""The two open-loop baselines miss in opposite directions -- always.

Fold the same strip two ways: the triangular path (straight up to an apex,
straight down) drags the fold short of the target, while the circular arc
carries momentum past it. This sign structure holds across the whole
material prior, which is exactly why a feedback policy has room to do
better than either.
"""

from stripfold import desk_scale_params
from stripfold.paths import circular_path, run_path, triangular_path
from stripfold.trainer import MaterialPrior


def main():
    print("=== baseline sign structure over the material prior ===")
    prior = MaterialPrior()
    grid = prior.grid(3, 3)
    print(f"{len(grid)} materials: k in [{prior.k_min}, {prior.k_max}], "
          f"damping ratio log-spaced 1..{prior.damping_ratio_max:.0f}\n")

    header = f"{'k':>6} {'b':>9} | {'tri d (mm)':>10} {'cir d (mm)':>10}"
    print(header)
    print("-" * len(header))
    violations = 0
    for k, b in grid:
        params = desk_scale_params(k, b)
        L = params.strip_length
        tri = run_path(triangular_path(L), params)
        cir = run_path(circular_path(L), params)
        mark = ""
        if not (tri.touched and tri.d < 0 and cir.touched and cir.d > 0):
            mark = "  <-- unexpected!"
            violations += 1
        print(f"{k:6.3f} {b:9.5f} | {tri.d*1000:+10.1f} {cir.d*1000:+10.1f}"
              f"{mark}")

    print()
    if violations == 0:
        print("triangular short (d<0) and circular past (d>0) everywhere.")
    else:
        print(f"{violations} violations of the expected sign structure")


if __name__ == "__main__":
    main()
