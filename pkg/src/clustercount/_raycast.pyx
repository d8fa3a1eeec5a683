# cython: language_level=3
"""Compiled raycaster.  Twin of ``_raycast_py``; keep arithmetic in sync.

Built with -ffp-contract=off so no fused multiply-adds sneak in: the frames
must match the pure-Python fallback bit for bit.
"""

from libc.math cimport cos, floor, sin

cdef double _DEG = 3.141592653589793 / 180.0


def render_columns(const unsigned char[:, :] occupancy,
                   const int[:, :] texgrid,
                   const double[:, :] palettes,
                   double x, double y, double heading_deg, double fov_deg,
                   int agent_tex,
                   float[:, :, ::1] out):
    cdef int grid_h = occupancy.shape[0]
    cdef int grid_w = occupancy.shape[1]
    cdef int h = out.shape[0]
    cdef int w = out.shape[1]
    cdef double half_h = h * 0.5
    cdef int max_steps = 2 * (grid_h + grid_w) + 4

    cdef double cr = palettes[agent_tex, 0]
    cdef double cg = palettes[agent_tex, 1]
    cdef double cb = palettes[agent_tex, 2]

    cdef int c, r, i, map_x, map_y, step_x, step_y, side, inside, tex, band
    cdef int top, bottom
    cdef double off, ang, dirx, diry, delta_x, delta_y, side_x, side_y
    cdef double t, perp, hit, u, freq, wr, wg, wb, shade, wall_h, fade

    for c in range(w):
        off = fov_deg * ((c + 0.5) / w - 0.5) * _DEG
        ang = heading_deg * _DEG + off
        dirx = cos(ang)
        diry = sin(ang)

        map_x = <int>floor(x)
        map_y = <int>floor(y)
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
        for i in range(max_steps):
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
        band = (<int>floor(u * freq)) & 1
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
        top = <int>(half_h - wall_h * 0.5)
        bottom = <int>(half_h + wall_h * 0.5)
        if top < 0:
            top = 0
        if bottom > h:
            bottom = h

        for r in range(top):
            fade = 0.10 + 0.15 * (1.0 - r / half_h)
            out[r, c, 0] = <float>(cr * fade)
            out[r, c, 1] = <float>(cg * fade)
            out[r, c, 2] = <float>(cb * fade)
        for r in range(top, bottom):
            out[r, c, 0] = <float>(wr * shade)
            out[r, c, 1] = <float>(wg * shade)
            out[r, c, 2] = <float>(wb * shade)
        for r in range(bottom, h):
            fade = 0.15 + 0.45 * ((r - half_h) / half_h)
            out[r, c, 0] = <float>(cr * 0.5 * fade)
            out[r, c, 1] = <float>(cg * 0.5 * fade)
            out[r, c, 2] = <float>(cb * 0.5 * fade)
