"""Pure-Python raycaster, line-for-line twin of the compiled kernel.

Every arithmetic expression here matches ``_raycast.pyx`` in operation order,
and the extension is compiled with floating-point contraction disabled, so
the two backends produce bit-identical float32 frames.  Keep the twins in
sync when touching either.
"""

from math import cos, floor, pi, sin

_DEG = pi / 180.0


def render_columns(occupancy, texgrid, palettes, x, y, heading_deg, fov_deg,
                   agent_tex, out):
    grid_h = occupancy.shape[0]
    grid_w = occupancy.shape[1]
    h = out.shape[0]
    w = out.shape[1]
    half_h = h * 0.5
    max_steps = 2 * (grid_h + grid_w) + 4

    cr = palettes[agent_tex, 0]
    cg = palettes[agent_tex, 1]
    cb = palettes[agent_tex, 2]

    for c in range(w):
        off = fov_deg * ((c + 0.5) / w - 0.5) * _DEG
        ang = heading_deg * _DEG + off
        dirx = cos(ang)
        diry = sin(ang)

        map_x = int(floor(x))
        map_y = int(floor(y))
        if dirx > 1e-12:
            step_x = 1
            delta_x = 1.0 / dirx
            side_x = (map_x + 1.0 - x) * delta_x
        elif dirx < -1e-12:
            step_x = -1
            delta_x = -1.0 / dirx
            side_x = (x - map_x) * delta_x
        else:
            step_x = 0
            delta_x = 1e30
            side_x = 1e30
        if diry > 1e-12:
            step_y = 1
            delta_y = 1.0 / diry
            side_y = (map_y + 1.0 - y) * delta_y
        elif diry < -1e-12:
            step_y = -1
            delta_y = -1.0 / diry
            side_y = (y - map_y) * delta_y
        else:
            step_y = 0
            delta_y = 1e30
            side_y = 1e30

        t = 0.0
        side = 0
        inside = 1
        for _ in range(max_steps):
            if side_x < side_y:
                t = side_x
                side_x = side_x + delta_x
                map_x = map_x + step_x
                side = 0
            else:
                t = side_y
                side_y = side_y + delta_y
                map_y = map_y + step_y
                side = 1
            if map_x < 0 or map_x >= grid_w or map_y < 0 or map_y >= grid_h:
                inside = 0
                break
            if occupancy[map_y, map_x] != 0:
                break

        perp = t * cos(off)
        if perp < 1e-6:
            perp = 1e-6

        if inside:
            tex = texgrid[map_y, map_x]
        else:
            tex = 0
        if side == 0:
            hit = y + t * diry
        else:
            hit = x + t * dirx
        u = hit - floor(hit)
        freq = palettes[tex, 6]
        band = int(floor(u * freq)) & 1
        if band:
            wr = palettes[tex, 3]
            wg = palettes[tex, 4]
            wb = palettes[tex, 5]
        else:
            wr = palettes[tex, 0]
            wg = palettes[tex, 1]
            wb = palettes[tex, 2]

        shade = 1.0 / (1.0 + 0.25 * perp)
        if side == 1:
            shade = shade * 0.8

        wall_h = h / perp
        top = int(half_h - wall_h * 0.5)
        bottom = int(half_h + wall_h * 0.5)
        if top < 0:
            top = 0
        if bottom > h:
            bottom = h

        for r in range(top):
            fade = 0.10 + 0.15 * (1.0 - r / half_h)
            out[r, c, 0] = cr * fade
            out[r, c, 1] = cg * fade
            out[r, c, 2] = cb * fade
        for r in range(top, bottom):
            out[r, c, 0] = wr * shade
            out[r, c, 1] = wg * shade
            out[r, c, 2] = wb * shade
        for r in range(bottom, h):
            fade = 0.15 + 0.45 * ((r - half_h) / half_h)
            out[r, c, 0] = cr * 0.5 * fade
            out[r, c, 1] = cg * 0.5 * fade
            out[r, c, 2] = cb * 0.5 * fade
