"""Compiled inner loops shared by the operator, patch solver and smoothers.

All kernels work on a 3-axis layout ``(z, y, x)`` with x fastest. Lower
dimensional problems collapse the unused leading axes to extent 1 and mark
them inactive; the 1D tables on an inactive axis are ``[[1]]`` (values) and
``[[0]]`` (gradients), the eigenvector matrix is ``[[1]]`` with eigenvalue 0.

Global vectors are flat, lexicographically numbered arrays. The integer
geometry descriptor ``geo`` has shape ``(8, 3)`` with rows::

    0 gshape   global nodes per axis
    1 cstep    node stride between neighbouring cells (p, or 0 if inactive)
    2 ncn      nodes per cell (p+1, or 1)
    3 ncells   cells per axis
    4 pcells   cells of a vertex patch (2, or 1)
    5 ncl      closure nodes of a patch (2p+1, or 1)
    6 nin      interior nodes of a patch (2p-1, or 1)
    7 active   1 if the axis is a spatial direction

Access tracing: when ``tracing`` is true every global vector element access
is appended to ``trace`` as ``(index << 3) | (array_id << 1) | is_write``.
"""

import numpy as np
from numba import njit

ARRAY_U = 0
ARRAY_B = 1
ARRAY_R = 2
ARRAY_INDEX = 3

_OPTS = dict(cache=True, nogil=True, fastmath=False)


@njit(**_OPTS)
def _record(trace, pos, array_id, index, write):
    k = pos[0]
    if k < trace.shape[0]:
        trace[k] = (index << 3) | (array_id << 1) | write
    pos[0] = k + 1


@njit(**_OPTS)
def _contract(src, mat, axis, out):
    """out = src contracted with ``mat[i, j]`` over index j of ``axis``."""
    n0, n1, n2 = out.shape
    if axis == 2:
        m = src.shape[2]
        for a in range(n0):
            for b in range(n1):
                for i in range(n2):
                    s = 0.0
                    for j in range(m):
                        s += mat[i, j] * src[a, b, j]
                    out[a, b, i] = s
    elif axis == 1:
        m = src.shape[1]
        for a in range(n0):
            for i in range(n1):
                for c in range(n2):
                    out[a, i, c] = 0.0
                for j in range(m):
                    f = mat[i, j]
                    for c in range(n2):
                        out[a, i, c] += f * src[a, j, c]
    else:
        m = src.shape[0]
        for i in range(n0):
            for b in range(n1):
                for c in range(n2):
                    out[i, b, c] = 0.0
            for j in range(m):
                f = mat[i, j]
                for b in range(n1):
                    for c in range(n2):
                        out[i, b, c] += f * src[j, b, c]


@njit(**_OPTS)
def _step(flag, s1, s2, mat, axis):
    """Contract the buffer selected by ``flag`` into the other one."""
    if flag:
        _contract(s2, mat, axis, s1)
    else:
        _contract(s1, mat, axis, s2)
    return not flag


@njit(**_OPTS)
def cell_apply(u, out, S, D, W, active, s1, s2):
    """Cell stiffness action by sum factorization.

    ``S`` and ``D`` are tuples of per-axis ``(n_q, n_nodes)`` value and
    gradient tables, ``W`` the quadrature weight tensor already scaled by
    the Jacobian factors. ``s1``/``s2`` are scratch arrays of ``u.shape``.
    """
    n0, n1, n2 = u.shape
    out[:, :, :] = 0.0
    for a in range(3):
        if active[a] == 0:
            continue
        s1[:, :, :] = u
        # flag False: current data in s1
        flag = False
        for b in range(2, -1, -1):
            if active[b] == 0:
                continue
            if b == a:
                flag = _step(flag, s1, s2, D[b], b)
            else:
                flag = _step(flag, s1, s2, S[b], b)
        cur = s2 if flag else s1
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    cur[i, j, k] *= W[i, j, k]
        for b in range(3):
            if active[b] == 0:
                continue
            if b == a:
                flag = _step(flag, s1, s2, D[b].T, b)
            else:
                flag = _step(flag, s1, s2, S[b].T, b)
        cur = s2 if flag else s1
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    out[i, j, k] += cur[i, j, k]


@njit(**_OPTS)
def fdm_apply(r, out, T, inv_lam, active, s1):
    """out = (kron T) diag(inv_lam) (kron T^T) r on an interior patch array."""
    n0, n1, n2 = r.shape
    s1[:, :, :] = r
    flag = False
    for b in range(2, -1, -1):
        if active[b] == 0:
            continue
        flag = _step(flag, s1, out, T[b].T, b)
    cur = out if flag else s1
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                cur[i, j, k] *= inv_lam[i, j, k]
    for b in range(3):
        if active[b] == 0:
            continue
        flag = _step(flag, s1, out, T[b], b)
    if not flag:
        out[:, :, :] = s1


@njit(**_OPTS)
def _cell_apply_2d(u, out, Sy, Dy, Sx, Dx, W, w):
    """2D sum factorization with shared intermediate results; ``w`` is a
    scratch array of shape (4, n_q, n_q)."""
    n = u.shape[0]
    nq = Sx.shape[0]
    XS, XD, GX, GY = w[0], w[1], w[2], w[3]
    for a in range(n):
        for q in range(nq):
            s = 0.0
            t = 0.0
            for b in range(n):
                s += Sx[q, b] * u[a, b]
                t += Dx[q, b] * u[a, b]
            XS[a, q] = s
            XD[a, q] = t
    for qy in range(nq):
        for qx in range(nq):
            gx = 0.0
            gy = 0.0
            for a in range(n):
                gx += Sy[qy, a] * XD[a, qx]
                gy += Dy[qy, a] * XS[a, qx]
            GX[qy, qx] = gx * W[qy, qx]
            GY[qy, qx] = gy * W[qy, qx]
    for a in range(n):
        for qx in range(nq):
            s = 0.0
            t = 0.0
            for qy in range(nq):
                s += Sy[qy, a] * GX[qy, qx]
                t += Dy[qy, a] * GY[qy, qx]
            XD[a, qx] = s
            XS[a, qx] = t
    for a in range(n):
        for b in range(n):
            s = 0.0
            for q in range(nq):
                s += Dx[q, b] * XD[a, q] + Sx[q, b] * XS[a, q]
            out[a, b] = s


@njit(**_OPTS)
def _cell_apply_3d(u, out, Sz, Dz, Sy, Dy, Sx, Dx, W, w):
    """3D sum factorization; ``w`` is a scratch array of shape (6, n, n, n)."""
    n = u.shape[0]
    XS, XD, A, B, C, E = w[0], w[1], w[2], w[3], w[4], w[5]
    # x direction: values and gradients
    for i in range(n):
        for j in range(n):
            for q in range(n):
                s = 0.0
                t = 0.0
                for k in range(n):
                    s += Sx[q, k] * u[i, j, k]
                    t += Dx[q, k] * u[i, j, k]
                XS[i, j, q] = s
                XD[i, j, q] = t
    # y direction: A = Sy XD, B = Dy XS, C = Sy XS
    for i in range(n):
        for q in range(n):
            for k in range(n):
                a = 0.0
                b = 0.0
                c = 0.0
                for j in range(n):
                    a += Sy[q, j] * XD[i, j, k]
                    b += Dy[q, j] * XS[i, j, k]
                    c += Sy[q, j] * XS[i, j, k]
                A[i, q, k] = a
                B[i, q, k] = b
                C[i, q, k] = c
    # z direction and quadrature scaling: gx -> XS, gy -> XD, gz -> E
    for q in range(n):
        for j in range(n):
            for k in range(n):
                gx = 0.0
                gy = 0.0
                gz = 0.0
                for i in range(n):
                    gx += Sz[q, i] * A[i, j, k]
                    gy += Sz[q, i] * B[i, j, k]
                    gz += Dz[q, i] * C[i, j, k]
                f = W[q, j, k]
                XS[q, j, k] = gx * f
                XD[q, j, k] = gy * f
                E[q, j, k] = gz * f
    # back along z
    for i in range(n):
        for j in range(n):
            for k in range(n):
                a = 0.0
                b = 0.0
                c = 0.0
                for q in range(n):
                    a += Sz[q, i] * XS[q, j, k]
                    b += Sz[q, i] * XD[q, j, k]
                    c += Dz[q, i] * E[q, j, k]
                A[i, j, k] = a
                B[i, j, k] = b
                C[i, j, k] = c
    # back along y: XD <- Sy^T A (x-gradient path), XS <- Dy^T B + Sy^T C
    for i in range(n):
        for j in range(n):
            for k in range(n):
                a = 0.0
                b = 0.0
                for q in range(n):
                    a += Sy[q, j] * A[i, q, k]
                    b += Dy[q, j] * B[i, q, k] + Sy[q, j] * C[i, q, k]
                XD[i, j, k] = a
                XS[i, j, k] = b
    for i in range(n):
        for j in range(n):
            for k in range(n):
                s = 0.0
                for q in range(n):
                    s += Dx[q, k] * XD[i, j, q] + Sx[q, k] * XS[i, j, q]
                out[i, j, k] = s


@njit(**_OPTS)
def cell_kernel(u, out, S, D, W, active, w):
    """Dispatch to the dimension-specialized cell kernels."""
    dim = active[0] + active[1] + active[2]
    if dim == 2:
        _cell_apply_2d(u[0], out[0], S[1], D[1], S[2], D[2], W[0], w[:4, 0])
    elif dim == 3:
        _cell_apply_3d(u, out, S[0], D[0], S[1], D[1], S[2], D[2], W, w)
    else:
        cell_apply(u, out, S, D, W, active, w[0], w[1])


@njit(**_OPTS)
def _fdm_2d(r, out, Ty, Tx, inv, w):
    m = r.shape[0]
    A, B = w[0], w[1]
    for i in range(m):
        for q in range(m):
            s = 0.0
            for k in range(m):
                s += Tx[k, q] * r[i, k]
            A[i, q] = s
    for q in range(m):
        for k in range(m):
            s = 0.0
            for i in range(m):
                s += Ty[i, q] * A[i, k]
            B[q, k] = s * inv[q, k]
    for i in range(m):
        for k in range(m):
            s = 0.0
            for q in range(m):
                s += Ty[i, q] * B[q, k]
            A[i, k] = s
    for i in range(m):
        for k in range(m):
            s = 0.0
            for q in range(m):
                s += Tx[k, q] * A[i, q]
            out[i, k] = s


@njit(**_OPTS)
def _fdm_3d(r, out, Tz, Ty, Tx, inv, w):
    m = r.shape[0]
    A, B = w[0], w[1]
    for i in range(m):
        for j in range(m):
            for q in range(m):
                s = 0.0
                for k in range(m):
                    s += Tx[k, q] * r[i, j, k]
                A[i, j, q] = s
    for i in range(m):
        for q in range(m):
            for k in range(m):
                s = 0.0
                for j in range(m):
                    s += Ty[j, q] * A[i, j, k]
                B[i, q, k] = s
    for q in range(m):
        for j in range(m):
            for k in range(m):
                s = 0.0
                for i in range(m):
                    s += Tz[i, q] * B[i, j, k]
                A[q, j, k] = s * inv[q, j, k]
    for i in range(m):
        for j in range(m):
            for k in range(m):
                s = 0.0
                for q in range(m):
                    s += Tz[i, q] * A[q, j, k]
                B[i, j, k] = s
    for i in range(m):
        for j in range(m):
            for k in range(m):
                s = 0.0
                for q in range(m):
                    s += Ty[j, q] * B[i, q, k]
                A[i, j, k] = s
    for i in range(m):
        for j in range(m):
            for k in range(m):
                s = 0.0
                for q in range(m):
                    s += Tx[k, q] * A[i, j, q]
                out[i, j, k] = s


@njit(**_OPTS)
def fdm_kernel(r, out, T, inv_lam, active, w):
    """Dispatch to the dimension-specialized fast diagonalization kernels."""
    dim = active[0] + active[1] + active[2]
    if dim == 2:
        _fdm_2d(r[0], out[0], T[1], T[2], inv_lam[0], w[:2, 0])
    elif dim == 3:
        _fdm_3d(r, out, T[0], T[1], T[2], inv_lam, w)
    else:
        fdm_apply(r, out, T, inv_lam, active, w[0])


@njit(**_OPTS)
def _cell_base(c0, c1, c2, geo):
    return c0 * geo[1, 0], c1 * geo[1, 1], c2 * geo[1, 2]


@njit(**_OPTS)
def vmult_add(u, dst, geo, S, D, W, sign, counter, trace, pos, tracing, metadata, dst_id):
    """dst += sign * A u over all cells (boundary rows not cleaned)."""
    N0, N1, N2 = geo[0, 0], geo[0, 1], geo[0, 2]
    n0, n1, n2 = geo[2, 0], geo[2, 1], geo[2, 2]
    active = geo[7]
    uc = np.empty((n0, n1, n2))
    oc = np.empty((n0, n1, n2))
    w = np.empty((6, n0, n1, n2))
    ncell_nodes = n0 * n1 * n2
    for c0 in range(geo[3, 0]):
        for c1 in range(geo[3, 1]):
            for c2 in range(geo[3, 2]):
                g0, g1, g2 = _cell_base(c0, c1, c2, geo)
                cid = (c0 * geo[3, 1] + c1) * geo[3, 2] + c2
                for i in range(n0):
                    for j in range(n1):
                        for k in range(n2):
                            idx = ((g0 + i) * N1 + g1 + j) * N2 + g2 + k
                            if tracing:
                                if metadata:
                                    _record(trace, pos, ARRAY_INDEX,
                                            cid * ncell_nodes + (i * n1 + j) * n2 + k, 0)
                                _record(trace, pos, ARRAY_U, idx, 0)
                            uc[i, j, k] = u[idx]
                cell_kernel(uc, oc, S, D, W, active, w)
                counter[0] += 1
                for i in range(n0):
                    for j in range(n1):
                        for k in range(n2):
                            idx = ((g0 + i) * N1 + g1 + j) * N2 + g2 + k
                            if tracing:
                                _record(trace, pos, dst_id, idx, 0)
                                _record(trace, pos, dst_id, idx, 1)
                            dst[idx] += sign * oc[i, j, k]


@njit(**_OPTS)
def finish_residual(r, b, geo, trace, pos, tracing):
    """r <- b - r on interior nodes, 0 on boundary nodes."""
    N0, N1, N2 = geo[0, 0], geo[0, 1], geo[0, 2]
    act = geo[7]
    for i in range(N0):
        bi = act[0] == 1 and (i == 0 or i == N0 - 1)
        for j in range(N1):
            bj = act[1] == 1 and (j == 0 or j == N1 - 1)
            for k in range(N2):
                bk = act[2] == 1 and (k == 0 or k == N2 - 1)
                idx = (i * N1 + j) * N2 + k
                if tracing:
                    _record(trace, pos, ARRAY_B, idx, 0)
                    _record(trace, pos, ARRAY_R, idx, 0)
                    _record(trace, pos, ARRAY_R, idx, 1)
                if bi or bj or bk:
                    r[idx] = 0.0
                else:
                    r[idx] = b[idx] - r[idx]


@njit(**_OPTS)
def zero_fill(r, trace, pos, tracing, array_id):
    for idx in range(r.shape[0]):
        if tracing:
            _record(trace, pos, array_id, idx, 1)
        r[idx] = 0.0


@njit(**_OPTS)
def patch_closure_residual(u, v, geo, S, D, W, acc, uc, oc, w, counter,
                           trace, pos, tracing, metadata):
    """acc <- A_bar u_bar on the closure of the patch at vertex ``v``.

    Cell results are summed in lexicographic closure order; values on the
    patch boundary are partial and only the interior is meaningful.
    """
    N1, N2 = geo[0, 1], geo[0, 2]
    n0, n1, n2 = geo[2, 0], geo[2, 1], geo[2, 2]
    active = geo[7]
    st0 = (v[0] - 1) * geo[1, 0]
    st1 = (v[1] - 1) * geo[1, 1]
    st2 = (v[2] - 1) * geo[1, 2]
    ncell_nodes = n0 * n1 * n2
    acc[:, :, :] = 0.0
    for c0 in range(geo[4, 0]):
        for c1 in range(geo[4, 1]):
            for c2 in range(geo[4, 2]):
                l0, l1, l2 = _cell_base(c0, c1, c2, geo)
                cid = 0
                if metadata:
                    gc0 = (v[0] - 1 + c0) if active[0] == 1 else 0
                    gc1 = (v[1] - 1 + c1) if active[1] == 1 else 0
                    gc2 = (v[2] - 1 + c2) if active[2] == 1 else 0
                    cid = (gc0 * geo[3, 1] + gc1) * geo[3, 2] + gc2
                for i in range(n0):
                    for j in range(n1):
                        for k in range(n2):
                            idx = ((st0 + l0 + i) * N1 + st1 + l1 + j) * N2 + st2 + l2 + k
                            if tracing:
                                if metadata:
                                    _record(trace, pos, ARRAY_INDEX,
                                            cid * ncell_nodes + (i * n1 + j) * n2 + k, 0)
                                _record(trace, pos, ARRAY_U, idx, 0)
                            uc[i, j, k] = u[idx]
                cell_kernel(uc, oc, S, D, W, active, w)
                counter[0] += 1
                for i in range(n0):
                    for j in range(n1):
                        for k in range(n2):
                            acc[l0 + i, l1 + j, l2 + k] += oc[i, j, k]


@njit(**_OPTS)
def _interior_offsets(geo):
    o0 = 1 if geo[7, 0] == 1 else 0
    o1 = 1 if geo[7, 1] == 1 else 0
    o2 = 1 if geo[7, 2] == 1 else 0
    return o0, o1, o2


@njit(**_OPTS)
def patch_residual(u, b, v, geo, S, D, W, rint, acc, uc, oc, w, counter,
                   trace, pos, tracing, metadata):
    """rint <- Pi_j b - Pi_j A_bar_j u_bar_j (interior-local array)."""
    N1, N2 = geo[0, 1], geo[0, 2]
    patch_closure_residual(u, v, geo, S, D, W, acc, uc, oc, w, counter,
                           trace, pos, tracing, metadata)
    o0, o1, o2 = _interior_offsets(geo)
    st0 = (v[0] - 1) * geo[1, 0] + o0
    st1 = (v[1] - 1) * geo[1, 1] + o1
    st2 = (v[2] - 1) * geo[1, 2] + o2
    for i in range(geo[6, 0]):
        for j in range(geo[6, 1]):
            for k in range(geo[6, 2]):
                idx = ((st0 + i) * N1 + st1 + j) * N2 + st2 + k
                if tracing:
                    _record(trace, pos, ARRAY_B, idx, 0)
                rint[i, j, k] = b[idx] - acc[o0 + i, o1 + j, o2 + k]


@njit(**_OPTS)
def patch_residual_alloc(u, b, v, geo, S, D, W, rint, counter):
    cshape = (geo[2, 0], geo[2, 1], geo[2, 2])
    acc = np.empty((geo[5, 0], geo[5, 1], geo[5, 2]))
    w = np.empty((6, cshape[0], cshape[1], cshape[2]))
    patch_residual(u, b, v, geo, S, D, W, rint, acc, np.empty(cshape), np.empty(cshape), w,
                   counter, np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64),
                   False, False)


@njit(**_OPTS)
def add_interior(u, v, geo, d, trace, pos, tracing):
    """u += Pi_j^T d (writes the patch interior only)."""
    N1, N2 = geo[0, 1], geo[0, 2]
    o0, o1, o2 = _interior_offsets(geo)
    st0 = (v[0] - 1) * geo[1, 0] + o0
    st1 = (v[1] - 1) * geo[1, 1] + o1
    st2 = (v[2] - 1) * geo[1, 2] + o2
    for i in range(geo[6, 0]):
        for j in range(geo[6, 1]):
            for k in range(geo[6, 2]):
                idx = ((st0 + i) * N1 + st1 + j) * N2 + st2 + k
                if tracing:
                    _record(trace, pos, ARRAY_U, idx, 0)
                    _record(trace, pos, ARRAY_U, idx, 1)
                u[idx] += d[i, j, k]


@njit(**_OPTS)
def gather_interior(r, v, geo, out, trace, pos, tracing, array_id):
    N1, N2 = geo[0, 1], geo[0, 2]
    o0, o1, o2 = _interior_offsets(geo)
    st0 = (v[0] - 1) * geo[1, 0] + o0
    st1 = (v[1] - 1) * geo[1, 1] + o1
    st2 = (v[2] - 1) * geo[1, 2] + o2
    for i in range(geo[6, 0]):
        for j in range(geo[6, 1]):
            for k in range(geo[6, 2]):
                idx = ((st0 + i) * N1 + st1 + j) * N2 + st2 + k
                if tracing:
                    _record(trace, pos, array_id, idx, 0)
                out[i, j, k] = r[idx]


@njit(**_OPTS)
def local_updates(u, b, verts, lo, hi, geo, S, D, W, T, inv_lam, counter,
                  trace, pos, tracing, metadata):
    """Combined patch loop: local residual, FDM solve, scatter for verts[lo:hi]."""
    shape = (geo[6, 0], geo[6, 1], geo[6, 2])
    cshape = (geo[2, 0], geo[2, 1], geo[2, 2])
    rint = np.empty(shape)
    d = np.empty(shape)
    fw = np.empty((2, shape[0], shape[1], shape[2]))
    acc = np.empty((geo[5, 0], geo[5, 1], geo[5, 2]))
    uc = np.empty(cshape)
    oc = np.empty(cshape)
    w = np.empty((6, cshape[0], cshape[1], cshape[2]))
    active = geo[7]
    for n in range(lo, hi):
        v = verts[n]
        patch_residual(u, b, v, geo, S, D, W, rint, acc, uc, oc, w, counter,
                       trace, pos, tracing, metadata)
        fdm_kernel(rint, d, T, inv_lam, active, fw)
        add_interior(u, v, geo, d, trace, pos, tracing)


@njit(**_OPTS)
def local_solves(u, r, verts, lo, hi, geo, T, inv_lam, trace, pos, tracing):
    """Separated patch loop: u += Pi_j^T A_j^{-1} Pi_j r for verts[lo:hi]."""
    shape = (geo[6, 0], geo[6, 1], geo[6, 2])
    rint = np.empty(shape)
    d = np.empty(shape)
    fw = np.empty((2, shape[0], shape[1], shape[2]))
    active = geo[7]
    for n in range(lo, hi):
        v = verts[n]
        gather_interior(r, v, geo, rint, trace, pos, tracing, ARRAY_R)
        fdm_kernel(rint, d, T, inv_lam, active, fw)
        add_interior(u, v, geo, d, trace, pos, tracing)
