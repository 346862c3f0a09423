"""Low-level chain integrator.

Maximal-coordinate point masses with inextensible links solved by iterative
projection, bending spring-dampers applied as force triples, and a rigid
desk plane. One call advances a full control-rate step as a sequence of
substeps. All functions operate on plain float64 arrays so they can be
jitted and shared between strip sizes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
# non-zero status is 1 + index of the substep that produced a non-finite value

LINK_TOL = 1e-6  # max allowed |length - rest| after a step
_SOLVE_TOL = 1e-8  # early-exit threshold for the projection loop


@njit(cache=True, nogil=True)
def _advance(pos, vel, prev, n_sub, dt, grip_from, grip_to, grip_driven,
             mass, rest_len, radius, stiffness, damping, gravity,
             max_iters, desk_enabled, pin_fx_out):
    n = pos.shape[0]
    inv_m = 1.0 / mass
    fx_sum = 0.0
    # scratch arrays for the Newton projection (one tridiagonal solve per
    # iteration) and the contact active set
    ux = np.empty(n - 1)
    uz = np.empty(n - 1)
    cviol = np.empty(n - 1)
    diag = np.empty(n - 1)
    off = np.empty(n - 1)
    lam = np.empty(n - 1)
    cp = np.empty(n - 1)
    dp = np.empty(n - 1)
    wx = np.empty(n)
    wz = np.empty(n)
    acc = np.empty(n)
    # lift[i] != 0 marks a desk contact the chain pulled upward on the
    # previous substep: it is left out of the contact set so it can peel off
    lift = np.zeros(n)
    for s in range(n_sub):
        a0 = (s) / n_sub
        a1 = (s + 1.0) / n_sub
        g0x = grip_from[0] + a0 * (grip_to[0] - grip_from[0])
        g0z = grip_from[1] + a0 * (grip_to[1] - grip_from[1])
        g1x = grip_from[0] + a1 * (grip_to[0] - grip_from[0])
        g1z = grip_from[1] + a1 * (grip_to[1] - grip_from[1])
        if grip_driven:
            vel[n - 1, 0] = (g1x - g0x) / dt
            vel[n - 1, 1] = (g1z - g0z) / dt

        bend_fx0 = 0.0
        # bending spring-dampers at interior joints, damping semi-implicit
        for j in range(1, n - 1):
            t1x = pos[j, 0] - pos[j - 1, 0]
            t1z = pos[j, 1] - pos[j - 1, 1]
            t2x = pos[j + 1, 0] - pos[j, 0]
            t2z = pos[j + 1, 1] - pos[j, 1]
            l1sq = t1x * t1x + t1z * t1z
            l2sq = t2x * t2x + t2z * t2z
            if l1sq < 1e-20 or l2sq < 1e-20:
                continue
            cross = t1x * t2z - t1z * t2x
            dot = t1x * t2x + t1z * t2z
            theta = np.arctan2(cross, dot)
            # d(theta)/dp for the three particles
            gax = -t1z / l1sq
            gaz = t1x / l1sq
            gcx = -t2z / l2sq
            gcz = t2x / l2sq
            gbx = -gax - gcx
            gbz = -gaz - gcz
            thdot = (gax * vel[j - 1, 0] + gaz * vel[j - 1, 1]
                     + gbx * vel[j, 0] + gbz * vel[j, 1]
                     + gcx * vel[j + 1, 0] + gcz * vel[j + 1, 1])
            wa = 0.0 if j - 1 == 0 else inv_m
            wb = inv_m
            wc = 0.0 if (grip_driven and j + 1 == n - 1) else inv_m
            gen_mass = (wa * (gax * gax + gaz * gaz)
                        + wb * (gbx * gbx + gbz * gbz)
                        + wc * (gcx * gcx + gcz * gcz))
            if gen_mass <= 0.0:
                continue
            i_eff = 1.0 / gen_mass
            tau = -(stiffness * theta + damping * thdot) / (1.0 + dt * damping / i_eff)
            vel[j - 1, 0] += dt * tau * gax * wa
            vel[j - 1, 1] += dt * tau * gaz * wa
            vel[j, 0] += dt * tau * gbx * wb
            vel[j, 1] += dt * tau * gbz * wb
            vel[j + 1, 0] += dt * tau * gcx * wc
            vel[j + 1, 1] += dt * tau * gcz * wc
            if j - 1 == 0:
                bend_fx0 += tau * gax

        for i in range(n):
            prev[i, 0] = pos[i, 0]
            prev[i, 1] = pos[i, 1]

        # predict: pinned sphere 0 stays, gripper moves kinematically
        for i in range(1, n):
            if grip_driven and i == n - 1:
                continue
            vel[i, 1] -= dt * gravity
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
        if grip_driven:
            pos[n - 1, 0] = g1x
            pos[n - 1, 1] = g1z

        # Newton projection of the link constraints: each iteration solves
        # the linearized system J M^-1 J^T lambda = -c, which is tridiagonal
        # along the chain (Thomas algorithm). Desk contact is an active set
        # over the vertical inverse masses: predicted contacts are solved as
        # vertically fixed, spheres that penetrate mid-solve are clamped and
        # added, and a contact the converged multipliers pulled upward is
        # left out of the set on the next substep so it can peel off.
        link0_dp1x = 0.0
        for i in range(n):
            wx[i] = inv_m
            wz[i] = inv_m
            acc[i] = 0.0
        wx[0] = 0.0
        wz[0] = 0.0
        if grip_driven:
            wx[n - 1] = 0.0
            wz[n - 1] = 0.0
        if desk_enabled:
            for i in range(1, n):
                if not (grip_driven and i == n - 1):
                    if pos[i, 1] <= radius + 1e-12 and lift[i] == 0.0:
                        wz[i] = 0.0
                        if pos[i, 1] < radius:
                            pos[i, 1] = radius
        for i in range(n):
            lift[i] = 0.0
        worst_prev = 1e300
        for it in range(max_iters):
            worst = 0.0
            for i in range(n - 1):
                ax = pos[i + 1, 0] - pos[i, 0]
                az = pos[i + 1, 1] - pos[i, 1]
                d = np.sqrt(ax * ax + az * az)
                if d < 1e-14:
                    ux[i] = 1.0
                    uz[i] = 0.0
                    d = 1e-14
                else:
                    ux[i] = ax / d
                    uz[i] = az / d
                cviol[i] = d - rest_len
                ac = abs(cviol[i])
                if ac > worst:
                    worst = ac
            if worst < _SOLVE_TOL:
                break
            stalled = it > 3 and worst > 0.9 * worst_prev
            worst_prev = worst
            if stalled:
                # the current contact set admits no better fit (marginally
                # taut chain): release every contact the multipliers are
                # pulling upward on and keep iterating; a release is also
                # remembered so the next substep does not re-glue the sphere
                # before it has had a chance to move
                released = False
                if desk_enabled:
                    for i in range(1, n):
                        if grip_driven and i == n - 1:
                            continue
                        if wz[i] == 0.0 and acc[i] > 1e-12:
                            wz[i] = inv_m
                            acc[i] = 0.0
                            lift[i] = 1.0
                            released = True
                if not released:
                    break
                worst_prev = 1e300
            for i in range(n - 1):
                diag[i] = (wx[i] * ux[i] * ux[i] + wz[i] * uz[i] * uz[i]
                           + wx[i + 1] * ux[i] * ux[i]
                           + wz[i + 1] * uz[i] * uz[i]
                           + 1e-9 * inv_m)
                if i < n - 2:
                    off[i] = -(wx[i + 1] * ux[i] * ux[i + 1]
                               + wz[i + 1] * uz[i] * uz[i + 1])
            # Thomas solve of the tridiagonal system
            cp[0] = off[0] / diag[0] if n > 2 else 0.0
            dp[0] = -cviol[0] / diag[0]
            for i in range(1, n - 1):
                denom = diag[i] - off[i - 1] * cp[i - 1]
                if abs(denom) < 1e-300:
                    denom = 1e-300
                if i < n - 2:
                    cp[i] = off[i] / denom
                dp[i] = (-cviol[i] - off[i - 1] * dp[i - 1]) / denom
            lam[n - 2] = dp[n - 2]
            for i in range(n - 3, -1, -1):
                lam[i] = dp[i] - cp[i] * lam[i + 1]
            for i in range(n - 1):
                pos[i, 0] -= wx[i] * lam[i] * ux[i]
                pos[i, 1] -= wz[i] * lam[i] * uz[i]
                pos[i + 1, 0] += wx[i + 1] * lam[i] * ux[i]
                pos[i + 1, 1] += wz[i + 1] * lam[i] * uz[i]
                if i == 0:
                    link0_dp1x += wx[1] * lam[i] * ux[i]
            # track the vertical correction each contact suppressed: its
            # sign decides whether the contact is released next substep
            for i in range(1, n):
                if wz[i] == 0.0 and not (grip_driven and i == n - 1):
                    dz = lam[i - 1] * uz[i - 1]
                    if i <= n - 2:
                        dz -= lam[i] * uz[i]
                    acc[i] += inv_m * dz
            if desk_enabled:
                for i in range(1, n):
                    if grip_driven and i == n - 1:
                        continue
                    if pos[i, 1] < radius:
                        pos[i, 1] = radius
                        if wz[i] != 0.0:
                            wz[i] = 0.0
                            acc[i] = 0.0
        if desk_enabled:
            for i in range(1, n):
                if grip_driven and i == n - 1:
                    continue
                if wz[i] == 0.0 and acc[i] > 1e-12:
                    lift[i] = 1.0

        # horizontal pin reaction balances link-0 tension (read off the
        # projection corrections applied to sphere 1) and the bending force
        # acting on sphere 0
        fx_sum += mass * link0_dp1x / (dt * dt) - bend_fx0

        ok = True
        for i in range(1, n):
            if grip_driven and i == n - 1:
                vel[i, 0] = (g1x - g0x) / dt
                vel[i, 1] = (g1z - g0z) / dt
                continue
            vel[i, 0] = (pos[i, 0] - prev[i, 0]) / dt
            vel[i, 1] = (pos[i, 1] - prev[i, 1]) / dt
            if not (np.isfinite(pos[i, 0]) and np.isfinite(pos[i, 1])):
                ok = False
        if not ok:
            return s + 1
    pin_fx_out[0] = fx_sum / n_sub
    return STATUS_OK


@njit(cache=True, nogil=True)
def _contact_scan(pos, radius, ground_tol, touch_tol, touch_gap, rest_len):
    """Grounded run length, liftoff x, and layer-touch sphere (or -1)."""
    n = pos.shape[0]
    limit = radius + ground_tol
    run = 0
    for i in range(n):
        if pos[i, 1] <= limit:
            run += 1
        else:
            break
    x_c = pos[run - 1, 0] if run > 1 else 0.0
    touch_limit = 2.0 * radius + touch_tol
    best = -1
    for i in range(run + touch_gap, n):
        if pos[i, 1] <= touch_limit and pos[i, 0] <= x_c:
            if best < 0 or pos[i, 1] < pos[best, 1]:
                best = i
    return run, x_c, best


@njit(cache=True, nogil=True)
def _driven_step(pos, vel, prev, tx, tz, dt_sub, substeps, mass, rest_len,
                 radius, stiffness, damping, gravity, max_iters,
                 max_speed, fx_out):
    """One control-rate sim step toward a gripper target (desk enabled),
    with the kinematic speed clamp, the desk-height clamp, and the reach
    clamp (the pinned inextensible chain cannot follow a target outside
    the disk it can span, so such targets are projected onto it)."""
    n = pos.shape[0]
    reach = (n - 1) * rest_len - radius
    t_norm = np.sqrt(tx * tx + tz * tz)
    if t_norm > reach:
        tx *= reach / t_norm
        tz *= reach / t_norm
    if tz < radius:
        tz = radius
    fx = pos[n - 1, 0]
    fz = pos[n - 1, 1]
    mx = tx - fx
    mz = tz - fz
    dist = np.sqrt(mx * mx + mz * mz)
    max_move = max_speed * dt_sub * substeps
    if dist > max_move:
        tx = fx + mx * (max_move / dist)
        tz = fz + mz * (max_move / dist)
    grip_from = np.empty(2)
    grip_to = np.empty(2)
    grip_from[0] = fx
    grip_from[1] = fz
    grip_to[0] = tx
    grip_to[1] = tz
    return _advance(pos, vel, prev, substeps, dt_sub, grip_from, grip_to,
                    True, mass, rest_len, radius, stiffness, damping,
                    gravity, max_iters, True, fx_out)


@njit(cache=True, nogil=True)
def _policy_phi(w, n_inputs, n_hidden, gx, gz, x_c, strip_length):
    """Forward pass of the flat-weight controller; returns the angle."""
    obs = np.empty(n_inputs)
    obs[0] = gx / strip_length
    obs[1] = gz / strip_length
    obs[2] = x_c / strip_length
    out = w[n_inputs * n_hidden + 2 * n_hidden]  # output bias
    for h in range(n_hidden):
        a = w[n_inputs * n_hidden + h]  # hidden bias
        for i in range(n_inputs):
            a += w[h * n_inputs + i] * obs[i]
        out += w[n_inputs * n_hidden + n_hidden + h] * np.tanh(a)
    return np.pi * np.tanh(out)


@njit(cache=True, nogil=True)
def _prelift(pos, vel, prev, height, dt_sub, substeps, mass, rest_len,
             radius, stiffness, damping, gravity, max_iters, max_speed,
             fx_out):
    """Lift the grasped edge to the start height.

    The grasped end moves in toward the pin as it rises so the target stays
    inside the chain's reach (a straight vertical lift of a fully extended
    strip would ask for more length than the strip has)."""
    n = pos.shape[0]
    reach = (n - 1) * rest_len - radius
    r2 = reach * reach - height * height
    tx = np.sqrt(r2) if r2 > 0.0 else 0.0
    steps = 0
    while True:
        mx = tx - pos[n - 1, 0]
        mz = height - pos[n - 1, 1]
        if np.sqrt(mx * mx + mz * mz) < 1e-12:
            break
        status = _driven_step(pos, vel, prev, tx, height, dt_sub, substeps,
                              mass, rest_len, radius, stiffness, damping,
                              gravity, max_iters, max_speed, fx_out)
        steps += 1
        if status != STATUS_OK:
            return status, steps
        if steps > 1000000:
            return -1, steps
    return STATUS_OK, steps


@njit(cache=True, nogil=True)
def _episode_kernel(pos, vel, prev, w, n_inputs, n_hidden, strip_length,
                    n_links, mass, rest_len, radius, stiffness, damping,
                    gravity, max_iters, dt_sub, substeps,
                    control_period, action_step, horizon, max_extra,
                    prelift_height, x_min, x_max,
                    ground_tol, touch_tol, touch_gap, max_speed,
                    force_trace, traj, info_out):
    """Closed-loop policy episode. Returns (status, n_steps, touch_sphere,
    touch_x); status 0 = touched, 1 = touched in overtime, 2 = no touch,
    -1 = solver divergence. Trajectory rows are (gripper_x, gripper_z, x_c)
    observed before each control step; info_out[0] gets the prelift step
    count and info_out[1] the sim steps run after prelift."""
    fx_out = np.zeros(1)
    status, n_pre = _prelift(pos, vel, prev, prelift_height, dt_sub,
                             substeps, mass, rest_len, radius, stiffness,
                             damping, gravity, max_iters, max_speed, fx_out)
    info_out[0] = n_pre
    info_out[1] = 0
    if status != STATUS_OK:
        return -1, 0, -1, 0.0
    n = pos.shape[0]
    step_count = 0
    best = -1
    touch_x = 0.0
    while step_count < horizon + max_extra:
        overtime = step_count >= horizon
        run, x_c, _ = _contact_scan(pos, radius, ground_tol, touch_tol,
                                    touch_gap, rest_len)
        gx = pos[n - 1, 0]
        gz = pos[n - 1, 1]
        if overtime:
            phi = np.pi
        else:
            phi = _policy_phi(w, n_inputs, n_hidden, gx, gz, x_c,
                              strip_length)
        tx = gx + action_step * np.cos(phi)
        tz = gz + action_step * np.sin(phi)
        if tz < 0.0:
            tz = 0.0
        if tx < x_min:
            tx = x_min
        if tx > x_max:
            tx = x_max
        fx_acc = 0.0
        touched = False
        for _ in range(control_period):
            status = _driven_step(pos, vel, prev, tx, tz, dt_sub, substeps,
                                  mass, rest_len, radius, stiffness, damping,
                                  gravity, max_iters, max_speed, fx_out)
            if status != STATUS_OK:
                return -1, step_count, -1, 0.0
            fx_acc += fx_out[0]
            info_out[1] += 1
            run, xc2, best = _contact_scan(pos, radius, ground_tol,
                                           touch_tol, touch_gap, rest_len)
            if best >= 0:
                touched = True
                touch_x = pos[best, 0]
                break
        force_trace[step_count] = fx_acc / control_period
        traj[step_count, 0] = gx
        traj[step_count, 1] = gz
        traj[step_count, 2] = x_c
        step_count += 1
        if touched:
            return (1 if overtime else 0), step_count, best, touch_x
        if overtime and pos[n - 1, 0] <= x_min + 1e-9:
            break
    return 2, step_count, -1, 0.0


@njit(cache=True, nogil=True)
def _path_kernel(pos, vel, prev, knot_s, knot_xy, total_length, speed,
                 mass, rest_len, radius, stiffness, damping, gravity,
                 max_iters, dt_sub, substeps, control_period,
                 ground_tol, touch_tol, touch_gap, max_speed,
                 force_trace, traj, info_out):
    """Open-loop path following at constant speed. Returns (status, n_steps,
    touch_sphere, touch_x); status 0 = touched, 2 = path exhausted,
    -1 = solver divergence (touch_x then carries the path position s).
    info_out[0] gets the sim step count."""
    fx_out = np.zeros(1)
    info_out[0] = 0
    n = pos.shape[0]
    n_knots = knot_s.shape[0]
    s = 0.0
    step_count = 0
    best = -1
    touch_x = 0.0
    done = False
    while not done:
        fx_acc = 0.0
        k = 0
        gx = pos[n - 1, 0]
        gz = pos[n - 1, 1]
        run, x_c, _ = _contact_scan(pos, radius, ground_tol, touch_tol,
                                    touch_gap, rest_len)
        touched = False
        for _ in range(control_period):
            s += speed * dt_sub * substeps
            sq = min(max(s, 0.0), total_length)
            # piecewise-linear path lookup
            j = np.searchsorted(knot_s, sq)
            if j <= 0:
                tx, tz = knot_xy[0, 0], knot_xy[0, 1]
            elif j >= n_knots:
                tx, tz = knot_xy[n_knots - 1, 0], knot_xy[n_knots - 1, 1]
            else:
                t = (sq - knot_s[j - 1]) / (knot_s[j] - knot_s[j - 1])
                tx = knot_xy[j - 1, 0] + t * (knot_xy[j, 0] - knot_xy[j - 1, 0])
                tz = knot_xy[j - 1, 1] + t * (knot_xy[j, 1] - knot_xy[j - 1, 1])
            status = _driven_step(pos, vel, prev, tx, tz, dt_sub, substeps,
                                  mass, rest_len, radius, stiffness, damping,
                                  gravity, max_iters, max_speed, fx_out)
            if status != STATUS_OK:
                return -1, step_count, -1, s
            fx_acc += fx_out[0]
            k += 1
            info_out[0] += 1
            run, xc2, best = _contact_scan(pos, radius, ground_tol,
                                           touch_tol, touch_gap, rest_len)
            if best >= 0:
                touched = True
                touch_x = pos[best, 0]
                done = True
                break
            if s >= total_length:
                done = True
                break
        if k == 0:
            break
        force_trace[step_count] = fx_acc / k
        traj[step_count, 0] = gx
        traj[step_count, 1] = gz
        traj[step_count, 2] = x_c
        step_count += 1
    if best >= 0:
        return 0, step_count, best, touch_x
    return 2, step_count, -1, touch_x


@njit(cache=True, nogil=True)
def _march_kernel(pos, vel, prev, knot_s, knot_xy, total_length, speed,
                  mass, rest_len, radius, stiffness, damping, gravity,
                  max_iters, dt_sub, substeps, settle_steps,
                  ground_tol, touch_tol, touch_gap, max_speed):
    """Path following with collapse-depth layer-touch detection, for the
    fold-height sweep. Two measures keep the recorded position a continuous
    function of the material. First, once the fold comes near the touch
    band the march switches to stop-and-settle stepping (hold the gripper
    for ``settle_steps`` sim steps after each extra millimeter), so the
    state tracks the quasi-static equilibrium instead of riding above it.
    Second, ``touch_tol`` is expected to be negative: the equilibrium
    clearance of the hovering fold can graze the band tangentially, which
    makes any first-crossing of a level the equilibria reach an ill-posed
    observable, but a level slightly below the sphere diameter is only ever
    crossed during the fold's dynamic collapse, so its first crossing is
    well behaved. Returns (status, gripper x); status 0 = touched, 2 =
    path exhausted, -1 = solver divergence."""
    fx_out = np.zeros(1)
    n = pos.shape[0]
    n_knots = knot_s.shape[0]
    near_band = 2.0 * radius + 3e-3
    s = 0.0
    settling = -1  # sim steps left in the current hold, -1 = moving
    while s < total_length:
        if settling < 0:
            s += speed * dt_sub * substeps
        sq = min(s, total_length)
        j = np.searchsorted(knot_s, sq)
        if j <= 0:
            tx, tz = knot_xy[0, 0], knot_xy[0, 1]
        elif j >= n_knots:
            tx, tz = knot_xy[n_knots - 1, 0], knot_xy[n_knots - 1, 1]
        else:
            t = (sq - knot_s[j - 1]) / (knot_s[j] - knot_s[j - 1])
            tx = knot_xy[j - 1, 0] + t * (knot_xy[j, 0] - knot_xy[j - 1, 0])
            tz = knot_xy[j - 1, 1] + t * (knot_xy[j, 1] - knot_xy[j - 1, 1])
        status = _driven_step(pos, vel, prev, tx, tz, dt_sub, substeps,
                              mass, rest_len, radius, stiffness, damping,
                              gravity, max_iters, max_speed, fx_out)
        if status != STATUS_OK:
            return -1, s
        run, x_c, best = _contact_scan(pos, radius, ground_tol, touch_tol,
                                       touch_gap, rest_len)
        if best >= 0:
            return 0, pos[n - 1, 0]
        if settling >= 0:
            settling -= 1
        else:
            zmin = 1e300
            for i in range(run + touch_gap, n):
                if pos[i, 1] < zmin and pos[i, 0] <= x_c:
                    zmin = pos[i, 1]
            if zmin <= near_band:
                # advance one more millimeter, then hold before moving on
                s += 1e-3
                settling = settle_steps
    return 2, 0.0


def advance(pos, vel, n_sub, dt, grip_from, grip_to, grip_driven,
            mass, rest_len, radius, stiffness, damping, gravity,
            max_iters, desk_enabled=True):
    """Advance ``n_sub`` substeps of size ``dt`` in place.

    Returns (status, mean horizontal pin force over the substeps).
    """
    prev = np.empty_like(pos)
    fx = np.zeros(1)
    status = _advance(pos, vel, prev, n_sub, dt,
                      np.asarray(grip_from, dtype=np.float64),
                      np.asarray(grip_to, dtype=np.float64),
                      grip_driven, mass, rest_len, radius,
                      stiffness, damping, gravity, max_iters,
                      desk_enabled, fx)
    return status, fx[0]


def bend_angles(pos):
    """Signed bend angle at every interior joint of a polyline."""
    t = np.diff(pos, axis=0)
    t1, t2 = t[:-1], t[1:]
    cross = t1[:, 0] * t2[:, 1] - t1[:, 1] * t2[:, 0]
    dot = (t1 * t2).sum(axis=1)
    return np.arctan2(cross, dot)


def mechanical_energy(pos, vel, mass, gravity, stiffness):
    """Kinetic + gravitational + bending elastic energy of the chain."""
    kin = 0.5 * mass * (vel ** 2).sum()
    pot = mass * gravity * pos[:, 1].sum()
    elast = 0.5 * stiffness * (bend_angles(pos) ** 2).sum()
    return kin + pot + elast
