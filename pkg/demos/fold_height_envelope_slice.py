"""Where does the fold land if you just march the gripper sideways?

Fix the gripper at one height, drag it from the grasped edge toward the pin,
and record the gripper position the instant the layers collapse onto each
other. Done over a grid of materials this traces an envelope: soft strips
droop and touch early, stiff ones carry the fold further. The envelope
moves smoothly with the material parameters -- that smoothness is what the
full `stripfold sweep` command checks on a much finer grid.
"""

from stripfold.trainer import MaterialPrior, fold_height_envelope


def main():
    print("=== fold-height envelope, one height, coarse grid ===")
    height = 0.10
    prior = MaterialPrior()
    nk, nb = 5, 4
    print(f"gripper height {height} m, {nk} x {nb} materials\n")

    rows = fold_height_envelope(prior, [height], nk=nk, nb=nb)

    ks = sorted({r["k"] for r in rows})
    ratios = sorted({round(r["b"] / (3e-3 * r["k"] + 3.5e-4), 6)
                     for r in rows})
    print("touch-x (mm) by stiffness (rows) and damping ratio (columns):")
    print(" " * 8 + "".join(f"{r:>9.2f}" for r in ratios))
    for k in ks:
        cells = []
        for ratio in ratios:
            for r in rows:
                if r["k"] == k and abs(
                        r["b"] / (3e-3 * r["k"] + 3.5e-4) - ratio) < 1e-4:
                    cells.append("   (none)" if r["censored"]
                                 else f"{r['x_touch']*1000:9.1f}")
                    break
        print(f"k={k:5.3f} " + "".join(cells))

    xs = [r["x_touch"] for r in rows if not r["censored"]]
    print(f"\nenvelope width at this height: "
          f"{(max(xs) - min(xs))*1000:.1f} mm "
          f"({len(xs)}/{len(rows)} runs touched)")


if __name__ == "__main__":
    main()
