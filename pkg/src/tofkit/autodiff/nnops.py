"""Structured ops: 2-D convolution, bilinear sampling, padding, upsampling,
and the ring-shift gather used by spatial propagation.

conv2d uses zero padding sized to preserve spatial dims at stride 1
(pad = dilation*(k-1)//2 per side for odd kernels) and supports strided,
dilated, and grouped/depthwise variants.
"""

from __future__ import annotations

import numpy as np

from .engine import Tensor, _accumulate, _as_tensor, _make

__all__ = ["conv2d", "bilinear_sample", "pad2d", "upsample_nearest", "ring_shift"]


def _conv_geometry(h, w, kh, kw, stride, dilation):
    ph = dilation * (kh - 1) // 2
    pw = dilation * (kw - 1) // 2
    ekh = dilation * (kh - 1) + 1
    ekw = dilation * (kw - 1) + 1
    oh = (h + 2 * ph - ekh) // stride + 1
    ow = (w + 2 * pw - ekw) // stride + 1
    return ph, pw, oh, ow


def _tap_slices(ki, kj, stride, dilation, oh, ow):
    return (slice(ki * dilation, ki * dilation + (oh - 1) * stride + 1, stride),
            slice(kj * dilation, kj * dilation + (ow - 1) * stride + 1, stride))


def conv2d(x, weight, bias=None, stride: int = 1, dilation: int = 1,
           groups: int = 1) -> Tensor:
    """Cross-correlation of NCHW input with (C_out, C_in/groups, kh, kw) weights."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects NCHW input and OIHW weights")
    n, c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    if c_in % groups != 0 or c_out % groups != 0:
        raise ValueError(f"conv2d: channels ({c_in}->{c_out}) not divisible by groups={groups}")
    if c_in_g != c_in // groups:
        raise ValueError(f"conv2d: weight expects {c_in_g} in-channels per group, input has {c_in // groups}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (c_out,):
            raise ValueError("conv2d: bias must be (C_out,)")

    if kh == 1 and kw == 1 and stride == 1 and groups == 1:
        return _pointwise_conv(x, weight, bias, n, c_in, c_out, h, w)

    ph, pw, oh, ow = _conv_geometry(h, w, kh, kw, stride, dilation)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data

    depthwise = groups == c_in and c_in_g == 1 and c_out == c_in
    if depthwise:
        out = np.zeros((n, c_out, oh, ow), dtype=x.dtype)
        for ki in range(kh):
            for kj in range(kw):
                sl = _tap_slices(ki, kj, stride, dilation, oh, ow)
                out += xp[:, :, sl[0], sl[1]] * weight.data[:, 0, ki, kj][None, :, None, None]
    else:
        # im2col per group, one batched matmul each
        ky, kx = np.meshgrid(np.arange(kh), np.arange(kw), indexing="ij")
        oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
        rows = (ky.reshape(-1, 1) * dilation + oy.reshape(1, -1) * stride)
        cols_ix = (kx.reshape(-1, 1) * dilation + ox.reshape(1, -1) * stride)
        cg_in, cg_out = c_in // groups, c_out // groups
        out = np.empty((n, c_out, oh, ow), dtype=x.dtype)
        saved_cols = []
        for g in range(groups):
            xg = xp[:, g * cg_in:(g + 1) * cg_in]
            cols = xg[:, :, rows, cols_ix].reshape(n, cg_in * kh * kw, oh * ow)
            saved_cols.append(cols)
            wg = weight.data[g * cg_out:(g + 1) * cg_out].reshape(cg_out, cg_in * kh * kw)
            out[:, g * cg_out:(g + 1) * cg_out] = \
                np.matmul(wg, cols).reshape(n, cg_out, oh, ow)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        gxp = np.zeros((n, c_in, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        if depthwise:
            gw = np.zeros_like(weight.data)
            for ki in range(kh):
                for kj in range(kw):
                    sl = _tap_slices(ki, kj, stride, dilation, oh, ow)
                    patch = xp[:, :, sl[0], sl[1]]
                    gw[:, 0, ki, kj] = (g * patch).sum(axis=(0, 2, 3))
                    gxp[:, :, sl[0], sl[1]] += g * weight.data[:, 0, ki, kj][None, :, None, None]
        else:
            gw = np.zeros_like(weight.data)
            cg_in, cg_out = c_in // groups, c_out // groups
            for gi in range(groups):
                gg = g[:, gi * cg_out:(gi + 1) * cg_out].reshape(n, cg_out, oh * ow)
                cols = saved_cols[gi]
                # sum over batch of per-sample outer products
                gw_flat = np.matmul(gg, cols.transpose(0, 2, 1)).sum(axis=0)
                gw[gi * cg_out:(gi + 1) * cg_out] = gw_flat.reshape(cg_out, cg_in, kh, kw)
                wg = weight.data[gi * cg_out:(gi + 1) * cg_out].reshape(cg_out, -1)
                gcols = np.matmul(wg.T, gg).reshape(n, cg_in, kh * kw, oh, ow)
                t = 0
                for ki in range(kh):
                    for kj in range(kw):
                        sl = _tap_slices(ki, kj, stride, dilation, oh, ow)
                        gxp[:, gi * cg_in:(gi + 1) * cg_in, sl[0], sl[1]] += gcols[:, :, t]
                        t += 1
        _accumulate(weight, gw)
        gx = gxp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else gxp
        _accumulate(x, gx)

    return _make("conv2d", out, parents, bwd)


def _pointwise_conv(x, weight, bias, n, c_in, c_out, h, w) -> Tensor:
    w2 = weight.data.reshape(c_out, c_in)
    x2 = x.data.reshape(n, c_in, h * w)
    out = np.matmul(w2, x2).reshape(n, c_out, h, w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        g2 = g.reshape(n, c_out, h * w)
        _accumulate(weight, np.matmul(g2, x2.transpose(0, 2, 1)).sum(axis=0)
                    .reshape(weight.data.shape))
        _accumulate(x, np.matmul(w2.T, g2).reshape(n, c_in, h, w))

    return _make("conv2d", out, parents, bwd)


def pad2d(x, pad: int) -> Tensor:
    """Zero-pad the two trailing spatial axes of an NCHW tensor."""
    x = _as_tensor(x)
    p = int(pad)

    def bwd(g):
        _accumulate(x, g[:, :, p:g.shape[2] - p, p:g.shape[3] - p])

    return _make("pad2d", np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))), (x,), bwd)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    """Nearest-neighbor upsampling of an NCHW tensor by an integer factor."""
    x = _as_tensor(x)
    f = int(factor)
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, f, axis=2), f, axis=3)

    def bwd(g):
        _accumulate(x, g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)))

    return _make("upsample_nearest", out, (x,), bwd)


def ring_shift(x, offsets: list[tuple[int, int]]) -> Tensor:
    """Stack shifted copies of a single-channel map: out[:, i] holds
    x(r+dy, c+dx) for offsets[i], zero where the source falls outside."""
    x = _as_tensor(x)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError("ring_shift expects (N, 1, H, W)")
    n, _, h, w = x.shape
    k = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    xp = np.pad(x.data, ((0, 0), (0, 0), (k, k), (k, k)))
    out = np.empty((n, len(offsets), h, w), dtype=x.dtype)
    for i, (dy, dx) in enumerate(offsets):
        out[:, i] = xp[:, 0, k + dy:k + dy + h, k + dx:k + dx + w]

    def bwd(g):
        gxp = np.zeros_like(xp)
        for i, (dy, dx) in enumerate(offsets):
            gxp[:, 0, k + dy:k + dy + h, k + dx:k + dx + w] += g[:, i]
        _accumulate(x, gxp[:, :, k:k + h, k:k + w])

    return _make("ring_shift", out, (x,), bwd)


def bilinear_sample(x, coords) -> Tensor:
    """Sample NCHW features at fractional (y, x) positions, (N, P, 2).

    Out-of-bounds reads are zero (zero padding) and the result is
    differentiable with respect to both the features and the coordinates.
    Returns (N, C, P).
    """
    x = _as_tensor(x)
    coords = _as_tensor(coords)
    if coords.ndim != 3 or coords.shape[2] != 2 or coords.shape[0] != x.shape[0]:
        raise ValueError(f"bilinear_sample: coords must be (N, P, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords.data)):
        raise ValueError("bilinear_sample: non-finite coordinates")
    n, c, h, w = x.shape
    y = coords.data[:, :, 0]
    xx = coords.data[:, :, 1]
    y0f = np.floor(y)
    x0f = np.floor(xx)
    fy = (y - y0f)[:, :, None]  # weight of the y0+1 row
    fx = (xx - x0f)[:, :, None]
    y0 = y0f.astype(np.int64)
    x0 = x0f.astype(np.int64)

    # channel-last layout keeps gathers and scatters contiguous per point
    flat = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1).reshape(n, h * w, c))

    def corner(yi, xi):
        valid = ((yi >= 0) & (yi < h) & (xi >= 0) & (xi < w))
        idx = np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
        vals = np.take_along_axis(flat, idx[:, :, None], axis=1)  # (N, P, C)
        return vals * valid[:, :, None], valid[:, :, None], idx

    v00, m00, i00 = corner(y0, x0)
    v01, m01, i01 = corner(y0, x0 + 1)
    v10, m10, i10 = corner(y0 + 1, x0)
    v11, m11, i11 = corner(y0 + 1, x0 + 1)

    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    out_plc = v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11  # (N, P, C)
    out = np.ascontiguousarray(out_plc.transpose(0, 2, 1))

    def bwd(g):
        gp = np.ascontiguousarray(g.transpose(0, 2, 1))  # (N, P, C)
        if x.requires_grad:
            gflat = np.zeros_like(flat)
            # concatenate the four corners and scatter per sample: the 2-D
            # ufunc.at form is an order of magnitude faster than tuple indexing
            idx_all = np.concatenate([i00, i01, i10, i11], axis=1)
            val_all = np.concatenate([gp * w00 * m00, gp * w01 * m01,
                                      gp * w10 * m10, gp * w11 * m11], axis=1)
            for s in range(n):
                np.add.at(gflat[s], idx_all[s], val_all[s])
            _accumulate(x, gflat.reshape(n, h, w, c).transpose(0, 3, 1, 2))
        if coords.requires_grad:
            dy = (v10 - v00) * (1 - fx) + (v11 - v01) * fx
            dx = (v01 - v00) * (1 - fy) + (v11 - v10) * fy
            gy = (gp * dy).sum(axis=2)
            gx = (gp * dx).sum(axis=2)
            _accumulate(coords, np.stack([gy, gx], axis=2))

    return _make("bilinear_sample", out, (x, coords), bwd)
