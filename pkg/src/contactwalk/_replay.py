"""Hot event-replay loops.

These are deterministic integer/float loops over pre-sorted event tables.
They are JIT-compiled when numba is importable and run as plain Python
otherwise; both paths execute the identical statements, so results do not
depend on which one is active.

Conventions shared by all loops:
  * events with time <= t_end are applied (paths are right-continuous);
  * a graphical event and a walker ring at the same float time resolve
    graphical-first;
  * arrow sources with flat index -1 are phantom boundary sites and read the
    constant ``phantom``;
  * ``ext_time`` uses -1.0 as the "not absorbed yet" sentinel.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit as _numba_njit

    def njit(func):
        return _numba_njit(cache=True)(func)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(func):
        return func

    HAVE_NUMBA = False

_FAR = 1e300


@njit
def cp_replay(ev_time, ev_arrow, ev_src, ev_dst, i0, t_end,
              occ, visited, phantom, count, ext_time):
    i = i0
    n = ev_time.shape[0]
    while i < n and ev_time[i] <= t_end:
        d = ev_dst[i]
        if ev_arrow[i] == 1:
            s = ev_src[i]
            if s >= 0:
                src_occ = occ[s]
            else:
                src_occ = phantom
            if src_occ == 1 and occ[d] == 0:
                occ[d] = 1
                visited[d] = 1
                count += 1
        else:
            if occ[d] == 1:
                occ[d] = 0
                count -= 1
                if count == 0 and ext_time < 0.0:
                    ext_time = ev_time[i]
        i += 1
    return i, count, ext_time


@njit
def pair_replay(ev_time, ev_arrow, ev_src, ev_dst, t_end,
                occ1, occ2, phantom, diff_start,
                ep_site, ep_lo, ep_hi,
                count1, count2, ext1, ext2):
    """Evolve two copies on the same events, recording disagreement episodes.

    ``diff_start[x] >= 0`` means the copies disagree at x since that time.
    Each closed episode is appended to (ep_site, ep_lo, ep_hi); episodes still
    open at t_end are left in diff_start for the caller to close.
    """
    n = ev_time.shape[0]
    n_ep = 0
    i = 0
    while i < n and ev_time[i] <= t_end:
        tm = ev_time[i]
        d = ev_dst[i]
        if ev_arrow[i] == 1:
            s = ev_src[i]
            if s >= 0:
                s1 = occ1[s]
                s2 = occ2[s]
            else:
                s1 = phantom
                s2 = phantom
            if s1 == 1 and occ1[d] == 0:
                occ1[d] = 1
                count1 += 1
            if s2 == 1 and occ2[d] == 0:
                occ2[d] = 1
                count2 += 1
        else:
            if occ1[d] == 1:
                occ1[d] = 0
                count1 -= 1
                if count1 == 0 and ext1 < 0.0:
                    ext1 = tm
            if occ2[d] == 1:
                occ2[d] = 0
                count2 -= 1
                if count2 == 0 and ext2 < 0.0:
                    ext2 = tm
        differs = occ1[d] != occ2[d]
        started = diff_start[d] >= 0.0
        if differs and not started:
            diff_start[d] = tm
        elif started and not differs:
            ep_site[n_ep] = d
            ep_lo[n_ep] = diff_start[d]
            ep_hi[n_ep] = tm
            n_ep += 1
            diff_start[d] = -1.0
        i += 1
    return n_ep, count1, count2, ext1, ext2


@njit
def _site_flat(pos, offs, row, d_, half, side, periodic):
    """Flat index of pos + offs[row], or -1 when outside a non-periodic box."""
    f = 0
    for i in range(d_):
        c = pos[i] + offs[row, i] + half
        if periodic == 1:
            c = c % side
            if c < 0:
                c += side
        else:
            if c < 0 or c >= side:
                return -1
        f = f * side + c
    return f


@njit
def _window_code(pos, obs_off, n_obs, d_, half, side, periodic, phantom,
                 occ, obs_flat, inv):
    """Refresh obs_flat/inv for the window around pos; return its bit code."""
    code = 0
    for jj in range(n_obs):
        f = _site_flat(pos, obs_off, jj, d_, half, side, periodic)
        obs_flat[jj] = f
        if f >= 0:
            inv[f] = jj
            b = occ[f]
        else:
            b = phantom
        if b == 1:
            code |= 1 << jj
    return code


@njit
def walk_replay(ev_time, ev_arrow, ev_src, ev_dst,
                ring_time, ring_u,
                i0, j0, t_end,
                occ, count, ext_time,
                pos,
                d_, half, side, periodic, phantom,
                obs_off, obs_flat, inv,
                kern_pos,
                cum, jumps,
                seg_time, seg_code, seg_pos, n_seg,
                jmp_time, jmp_zidx, n_jmp):
    """Joint medium+walker replay from (event i0, ring j0) up to t_end.

    Appends a segment row whenever the observation-window code or the walker
    position changes, and a jump row for each realized jump.  Returns the
    updated cursor/counters plus an abort flag raised when a jump would take
    the walker outside a non-periodic box (the jump is not applied).
    """
    n_obs = obs_off.shape[0]
    n_kern = kern_pos.shape[0]
    n_vec = jumps.shape[0]
    for jj in range(n_obs):
        f = obs_flat[jj]
        if f >= 0:
            inv[f] = -1
    code = _window_code(pos, obs_off, n_obs, d_, half, side, periodic, phantom,
                        occ, obs_flat, inv)
    i = i0
    j = j0
    n_ev = ev_time.shape[0]
    n_ring = ring_time.shape[0]
    aborted = 0
    abort_time = -1.0
    while True:
        t_gc = ev_time[i] if i < n_ev else _FAR
        t_rg = ring_time[j] if j < n_ring else _FAR
        if t_gc <= t_end and t_gc <= t_rg:
            d = ev_dst[i]
            flipped = False
            if ev_arrow[i] == 1:
                s = ev_src[i]
                if s >= 0:
                    src_occ = occ[s]
                else:
                    src_occ = phantom
                if src_occ == 1 and occ[d] == 0:
                    occ[d] = 1
                    count += 1
                    flipped = True
            else:
                if occ[d] == 1:
                    occ[d] = 0
                    count -= 1
                    flipped = True
                    if count == 0 and ext_time < 0.0:
                        ext_time = t_gc
            if flipped:
                cell = inv[d]
                if cell >= 0:
                    code ^= 1 << cell
                    seg_time[n_seg] = t_gc
                    seg_code[n_seg] = code
                    for ii in range(d_):
                        seg_pos[n_seg, ii] = pos[ii]
                    n_seg += 1
            i += 1
        elif t_rg <= t_end:
            u = ring_u[j]
            kcode = 0
            for q in range(n_kern):
                kcode |= ((code >> kern_pos[q]) & 1) << q
            if u < cum[kcode, n_vec]:
                m = 1
                while u >= cum[kcode, m]:
                    m += 1
                ok = 1
                if periodic == 0:
                    for ii in range(d_):
                        c = pos[ii] + jumps[m - 1, ii]
                        if c < -half or c > half:
                            ok = 0
                if ok == 0:
                    aborted = 1
                    abort_time = t_rg
                    break
                for ii in range(d_):
                    pos[ii] += jumps[m - 1, ii]
                for jj in range(n_obs):
                    f = obs_flat[jj]
                    if f >= 0:
                        inv[f] = -1
                code = _window_code(pos, obs_off, n_obs, d_, half, side,
                                    periodic, phantom, occ, obs_flat, inv)
                jmp_time[n_jmp] = t_rg
                jmp_zidx[n_jmp] = m - 1
                n_jmp += 1
                seg_time[n_seg] = t_rg
                seg_code[n_seg] = code
                for ii in range(d_):
                    seg_pos[n_seg, ii] = pos[ii]
                n_seg += 1
            j += 1
        else:
            break
    return i, j, count, ext_time, n_seg, n_jmp, aborted, abort_time
