"""Fold a single strip with the triangular baseline and watch what happens.

The strip starts flat on the desk with its left edge pinned. The gripper
grabs the right edge, lifts it along the triangular waypoint path (up to the
apex, then down toward the pin), and we stop the moment the hanging layer
touches the laying one. The interesting number is d: how far from the
perfect half-fold the touch point landed (negative = short, positive =
past).
"""

from stripfold import desk_scale_params, min_damping
from stripfold.paths import run_path, triangular_path

def main():
    print("=== one triangular fold, step by step ===")

    # a middling material: moderately stiff, well damped
    stiffness = 0.16
    damping = min_damping(stiffness) * 7.0
    params = desk_scale_params(stiffness, damping)
    print(f"material: k = {stiffness}, b = {damping:.5f}")
    print(f"strip: {params.n_links} links x {params.link_length*1000:.0f} mm "
          f"= {params.strip_length:.1f} m")

    path = triangular_path(params.strip_length)
    print(f"path: {len(path.waypoints)} waypoints, "
          f"{path.total_length:.3f} m of gripper travel")

    result = run_path(path, params)

    print(f"\nran {result.steps} control steps")
    print("gripper track (every 40th control step):")
    for i in range(0, len(result.trajectory), 40):
        gx, gz, x_c = result.trajectory[i]
        print(f"  step {i:4d}: gripper ({gx:+.3f}, {gz:+.3f})  "
              f"liftoff point x_c = {x_c:.3f}")

    if result.touched:
        print(f"\nlayers touched: d = {result.d*1000:+.1f} mm")
        print("(the triangular path always lands short: d < 0)")
    else:
        print("\nthe layers never touched -- that would be a bug here")
    print(f"episode reward: {result.total_reward:+.4f} "
          f"(force penalty {result.intermediate_reward_sum:+.5f}, "
          f"misalignment {result.terminal_reward:+.4f})")


if __name__ == "__main__":
    main()
