"""Close the loop through pixels: render the strip, detect the liftoff point.

The feedback signal x_c (where the strip leaves the desk) comes from a
camera in the real setup, not from the simulator state. This demo runs the
synthetic version of that pipeline: project the strip into an oblique
camera, paint it on a desk-colored canvas, walk the laying-strip line for
the far end of the painted band, and back-project to desk coordinates.
The detected value is then compared with the simulator's own oracle.
"""

from stripfold import desk_scale_params, init_flat, min_damping, vision
from stripfold.sim import detect_desk_contact_x, drive_gripper_to


def main():
    print("=== the vision loop, one frame at a time ===")
    camera, width, height = vision.canonical_camera()
    print(f"camera: {width} x {height} px, homography desk -> image")

    stiffness = 0.1
    params = desk_scale_params(stiffness, min_damping(stiffness) * 10)
    state = init_flat(params)

    print("\nlifting the grasped edge through a partial fold...")
    for i, target in enumerate([(0.55, 0.1), (0.45, 0.2), (0.35, 0.25)]):
        state = drive_gripper_to(state, target, params, settle_time=0.3)
        truth = detect_desk_contact_x(state, params)
        x_c, hit, px_size = vision.observe_contact_x(
            state.positions, params.sphere_radius, camera, width, height,
            params.strip_length, link_length=params.link_length)
        err_px = abs(x_c - truth) / px_size if px_size else float("inf")
        print(f"  pose {i}: oracle x_c = {truth:.4f}  "
              f"detected = {x_c:.4f}  "
              f"error = {err_px:.2f} px-equivalents")

    print("\nsaving the last rendered frame to camera_frame.ppm")
    image = vision.render_strip(state.positions, camera, width, height,
                                strip_thickness=vision.CANONICAL_THICKNESS)
    image.save_ppm("camera_frame.ppm")
    print(f"({image.width} x {image.height} binary PPM; any image viewer "
          "will open it)")


if __name__ == "__main__":
    main()
