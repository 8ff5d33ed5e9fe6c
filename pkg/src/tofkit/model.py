"""Depth-completion network assembly.

Architecture: a stem extracts full-resolution features from the zero-filled
RGB-D input; four encoder stages (separable DownConv, serial dilated conv
block, channel attention) halve resolution each; stage 1 additionally fuses a
point-cloud branch (back-projected sparse depth -> edge convolution ->
grid pooling) through multimodal channel attention; a top-down decoder emits
depth at full, half, and quarter resolution; the full-resolution map is
refined by confidence-weighted spatial propagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from . import blocks as bl
from .errors import ConfigError
from .geometry import CameraIntrinsics, DepthMap, back_project
from .rng import substream

__all__ = ["ModelConfig", "CompletionModel", "FuseParams"]

# network-input scale for metric depth (meters -> unit-ish range)
DEPTH_IN_SCALE = 0.1
HEAD_BIAS_INIT = 2.0  # softplus(2) ~ 2.1 m starting prediction


@dataclass
class ModelConfig:
    """Hyperparameters the architecture leaves open, pinned in one place."""

    height: int = 48
    width: int = 64
    stem_channels: int = 24
    stage_widths: tuple[int, int, int, int] = (24, 32, 48, 64)
    decoder_width: int = 96
    sdc_dilations: tuple[tuple[int, ...], ...] = ((1, 2), (1, 2), (1, 2), (1, 2))
    xca_heads: tuple[int, int, int, int] = (2, 2, 2, 2)
    edgeconv_layers: int = 3
    edgeconv_k: int = 8
    descriptor_dim: int = 64
    point_cap: int = 512
    spn_iterations: int = 3
    spn_gamma: float = 0.5
    loss_gammas: tuple[float, float, float] = (1.0, 0.5, 0.25)  # scales 1/1, 1/2, 1/4
    loss_terms: tuple[int, ...] = (1, 2)  # exponents; (1,) or (2,) select a single norm
    use_spn: bool = True
    use_mxca: bool = True
    use_3d: bool = True

    def __post_init__(self):
        if self.height % 16 or self.width % 16:
            raise ConfigError(f"input size {self.width}x{self.height} must be divisible by 16")
        if len(self.stage_widths) != 4 or len(self.sdc_dilations) != 4 or len(self.xca_heads) != 4:
            raise ConfigError("exactly four encoder stages required")
        if len(self.loss_gammas) != 3:
            raise ConfigError("exactly three decoder scales (1/1, 1/2, 1/4)")
        if any(g <= 0 for g in self.loss_gammas):
            raise ConfigError("loss scale weights must be positive")
        if any(r not in (1, 2) for r in self.loss_terms) or not self.loss_terms:
            raise ConfigError("loss exponents must be a non-empty subset of {1, 2}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("stage_widths", "xca_heads", "loss_gammas", "loss_terms"):
            if key in d:
                d[key] = tuple(d[key])
        if "sdc_dilations" in d:
            d["sdc_dilations"] = tuple(tuple(x) for x in d["sdc_dilations"])
        return cls(**d)


@dataclass
class FuseParams:
    """Decoder fusion block: 1x1 reduce, norm, depthwise 3x3, 1x1 mix."""

    pw_in: bl.Conv2dParams
    norm: bl.ChannelNorm
    dw: bl.Conv2dParams
    pw_out: bl.Conv2dParams

    @classmethod
    def init(cls, rng, c_in: int, c_out: int) -> "FuseParams":
        return cls(
            pw_in=bl.Conv2dParams.init(rng, c_in, c_out, k=1),
            norm=bl.ChannelNorm.init(c_out),
            dw=bl.Conv2dParams.init(rng, c_out, c_out, k=3, groups=c_out),
            pw_out=bl.Conv2dParams.init(rng, c_out, c_out, k=1),
        )

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.gelu(self.norm(self.pw_in(x)))
        y = ad.gelu(self.dw(y))
        return self.pw_out(y)

    def named_params(self):
        out = []
        for pre, obj in (("pw_in", self.pw_in), ("norm", self.norm),
                         ("dw", self.dw), ("pw_out", self.pw_out)):
            out += [(f"{pre}.{n}", t) for n, t in obj.named_params()]
        return out


@dataclass
class _Stage:
    down: bl.DownConvParams
    sdc: bl.SdcBlockParams
    xca: bl.XcaParams
    mxca: bl.XcaParams | None = None

    def named_params(self):
        out = [(f"down.{n}", t) for n, t in self.down.named_params()]
        out += [(f"sdc.{n}", t) for n, t in self.sdc.named_params()]
        out += [(f"xca.{n}", t) for n, t in self.xca.named_params()]
        if self.mxca is not None:
            out += [(f"mxca.{n}", t) for n, t in self.mxca.named_params()]
        return out


class CompletionModel:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        cfg = config
        rng = substream(seed, "init")
        with ad.precision(self.dtype):
            # stem sees RGB, sparse depth, and two normalized coordinate maps
            self.stem = bl.Conv2dParams.init(rng, 6, cfg.stem_channels, k=3)
            widths = cfg.stage_widths
            self.stages: list[_Stage] = []
            c_prev = cfg.stem_channels
            for i in range(4):
                w = widths[i]
                stage = _Stage(
                    down=bl.DownConvParams.init(rng, c_prev, w),
                    sdc=bl.SdcBlockParams.init(rng, w, cfg.sdc_dilations[i]),
                    xca=bl.XcaParams.init(rng, w, w, cfg.xca_heads[i]),
                )
                if i == 0 and cfg.use_mxca:
                    d_fuse = w + (cfg.descriptor_dim if cfg.use_3d else 0)
                    stage.mxca = bl.XcaParams.init(rng, d_fuse, d_fuse, heads=1)
                self.stages.append(stage)
                c_prev = self._stage1_out_channels() if i == 0 else w
            if cfg.use_3d:
                in_dim = 3 + 2 + cfg.stem_channels  # xyz + normalized uv + stem feature
                self.edge = bl.EdgeConvParams.init(
                    rng, in_dim, k=cfg.edgeconv_k,
                    layer_dims=(cfg.descriptor_dim,) * cfg.edgeconv_layers)
                self.jpp = bl.JppParams.init(rng, cfg.descriptor_dim)
            else:
                self.edge = None
                self.jpp = None

            dw = cfg.decoder_width
            w1, w2, w3, w4 = widths
            c1out = self._stage1_out_channels()
            self.bottleneck = bl.Conv2dParams.init(rng, w4, dw, k=1)
            self.dec8 = FuseParams.init(rng, dw + w3, 64)
            self.dec4 = FuseParams.init(rng, 64 + w2, 48)
            self.dec2 = FuseParams.init(rng, 48 + c1out, 32)
            self.dec1 = FuseParams.init(rng, 32 + cfg.stem_channels, 24)
            self.head_quarter = bl.Conv2dParams.init(rng, 48, 1, k=1)
            self.head_half = bl.Conv2dParams.init(rng, 32, 1, k=1)
            self.head_full = bl.Conv2dParams.init(rng, 24, 1, k=1)
            for head in (self.head_quarter, self.head_half, self.head_full):
                head.bias.data[:] = HEAD_BIAS_INIT
            self.spn = bl.SpnParams.init(rng, 24, cfg.spn_gamma, cfg.spn_iterations) \
                if cfg.use_spn else None
        self._coords_const: np.ndarray | None = None

    def _stage1_out_channels(self) -> int:
        return self.config.stage_widths[0] + (
            self.config.descriptor_dim if self.config.use_3d else 0)

    def component_names(self) -> list[str]:
        """Module graph summary used by the ablation parity checks."""
        names = ["stem"]
        for i in range(4):
            names += [f"stage{i + 1}.down", f"stage{i + 1}.sdc", f"stage{i + 1}.xca"]
        if self.config.use_mxca:
            names.append("stage1.mxca")
        if self.config.use_3d:
            names += ["branch3d.edgeconv", "branch3d.jpp"]
        names += ["decoder.bottleneck", "decoder.dec8", "decoder.dec4",
                  "decoder.dec2", "decoder.dec1", "decoder.heads"]
        if self.config.use_spn:
            names.append("spn")
        return names

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = [("stem." + n, t) for n, t in self.stem.named_params()]
        for i, st in enumerate(self.stages):
            out += [(f"stage{i + 1}.{n}", t) for n, t in st.named_params()]
        if self.edge is not None:
            out += [("edge." + n, t) for n, t in self.edge.named_params()]
            out += [("jpp." + n, t) for n, t in self.jpp.named_params()]
        out += [("bottleneck." + n, t) for n, t in self.bottleneck.named_params()]
        for pre, obj in (("dec8", self.dec8), ("dec4", self.dec4),
                         ("dec2", self.dec2), ("dec1", self.dec1),
                         ("head_quarter", self.head_quarter),
                         ("head_half", self.head_half), ("head_full", self.head_full)):
            out += [(f"{pre}.{n}", t) for n, t in obj.named_params()]
        if self.spn is not None:
            out += [("spn." + n, t) for n, t in self.spn.named_params()]
        return out

    def param_count(self) -> int:
        return sum(t.size for _, t in self.named_params())

    def astype(self, dtype) -> "CompletionModel":
        self.dtype = np.dtype(dtype).type
        for _, t in self.named_params():
            t.data = t.data.astype(self.dtype)
        self._coords_const = None
        return self

    # ------------------------------------------------------------------ I/O

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_params())
        if set(own) != set(state):
            missing = set(own) ^ set(state)
            raise ValueError(f"parameter names mismatch: {sorted(missing)[:4]}...")
        for n, t in own.items():
            if tuple(state[n].shape) != t.shape:
                raise ValueError(f"shape mismatch for {n}: {state[n].shape} vs {t.shape}")
            t.data = state[n].astype(self.dtype)

    def save(self, path, extra_meta: dict | None = None,
             extra_arrays: dict[str, np.ndarray] | None = None) -> None:
        meta = {"model_config": self.config.to_dict(), "seed": self.seed}
        if extra_meta:
            meta.update(extra_meta)
        arrays = dict(self.state_dict())
        if extra_arrays:
            for k, v in extra_arrays.items():
                arrays[f"extra/{k}"] = np.asarray(v, dtype=self.dtype)
        ad.save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> tuple["CompletionModel", dict, dict[str, np.ndarray]]:
        arrays, meta = ad.load_checkpoint(path)
        cfg = ModelConfig.from_dict(meta["model_config"])
        dtype = next(iter(arrays.values())).dtype if arrays else np.float32
        model = cls(cfg, seed=meta.get("seed", 0), dtype=dtype)
        extra = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
        state = {k: v for k, v in arrays.items() if not k.startswith("extra/")}
        model.load_state_dict(state)
        return model, meta, extra

    # -------------------------------------------------------------- forward

    def _coords(self, h: int, w: int) -> np.ndarray:
        if self._coords_const is None or self._coords_const.shape[-2:] != (h, w):
            v, u = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
            self._coords_const = np.stack(
                [u / max(w - 1, 1), v / max(h - 1, 1)]).astype(self.dtype)
        return self._coords_const

    def _intrinsics(self) -> CameraIntrinsics:
        # nominal pinhole used to lift the sparse channel; focal ~ 60 deg FoV
        w, h = self.config.width, self.config.height
        f = 0.8 * w
        return CameraIntrinsics(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0, width=w, height=h)

    def _attention_tokens(self, x: Tensor, fn) -> Tensor:
        """Apply a token-level function per sample of an NCHW tensor."""
        n, c, h, w = x.shape
        outs = []
        for i in range(n):
            tok = ad.transpose(ad.reshape(x[i:i + 1], (c, h * w)))
            res = fn(tok)
            outs.append(ad.reshape(ad.transpose(res), (1, res.shape[1], h, w)))
        return outs[0] if n == 1 else ad.concat(outs, axis=0)

    def _point_branch(self, sparse: np.ndarray, stem_feat: Tensor) -> Tensor:
        """Back-project the sparse channel, run edge conv + grid pooling.

        Returns (N, descriptor_dim, H/2, W/2); zero map when a frame has too
        few points for the neighbor graph.
        """
        cfg = self.config
        n, _, h, w = stem_feat.shape
        intr = self._intrinsics()
        outs = []
        for i in range(n):
            d = DepthMap(sparse[i, 0].astype(np.float64))
            cloud = back_project(d, intr)
            n_valid = len(cloud)
            if n_valid <= cfg.edgeconv_k:
                outs.append(Tensor(np.zeros((1, cfg.descriptor_dim, h // 2, w // 2),
                                            dtype=self.dtype)))
                continue
            if n_valid > cfg.point_cap:
                rng = substream(self.seed, "pointsub")
                keep = np.sort(rng.choice(n_valid, cfg.point_cap, replace=False))
                cloud.xyz = cloud.xyz[keep]
                cloud.pixels = cloud.pixels[keep]
            u, v = cloud.pixels[:, 0], cloud.pixels[:, 1]
            flat = ad.transpose(ad.reshape(stem_feat[i:i + 1], (stem_feat.shape[1], h * w)))
            feat_px = ad.gather_rows(flat, v * w + u)
            geo = np.concatenate([
                cloud.xyz * DEPTH_IN_SCALE,
                (u / max(w - 1, 1))[:, None],
                (v / max(h - 1, 1))[:, None],
            ], axis=1).astype(self.dtype)
            feats = ad.concat([Tensor(geo), feat_px], axis=1)
            desc = bl.edgeconv_forward(feats, cloud.xyz, self.edge)
            fhat = bl.jpp_accumulate(desc, cloud.pixels, height=h, width=w)
            x3d = bl.jpp_forward(fhat, self.jpp)  # (H/2, W/2, C)
            outs.append(ad.reshape(ad.transpose(x3d, (2, 0, 1)),
                                   (1, cfg.descriptor_dim, h // 2, w // 2)))
        return outs[0] if n == 1 else ad.concat(outs, axis=0)

    def forward(self, rgb: np.ndarray, sparse: np.ndarray) -> dict[str, Tensor]:
        """rgb (N, 3, H, W) in [0, 1]; sparse (N, 1, H, W) meters, 0 = missing.

        Returns depth predictions at scales "full", "half", "quarter" plus
        "refined" when the propagation stage is enabled; all strictly positive.
        """
        cfg = self.config
        rgb = np.asarray(rgb, dtype=self.dtype)
        sparse = np.asarray(sparse, dtype=self.dtype)
        if rgb.ndim != 4 or rgb.shape[1] != 3:
            raise ValueError(f"rgb must be (N, 3, H, W), got {rgb.shape}")
        n, _, h, w = rgb.shape
        if (h, w) != (cfg.height, cfg.width):
            raise ValueError(f"expected {cfg.width}x{cfg.height} input, got {w}x{h}")
        if sparse.shape != (n, 1, h, w):
            raise ValueError(f"sparse must be (N, 1, H, W), got {sparse.shape}")
        if not (np.all(np.isfinite(rgb)) and np.all(np.isfinite(sparse))):
            raise ValueError("non-finite network input")

        coords = np.broadcast_to(self._coords(h, w), (n, 2, h, w))
        x_in = Tensor(np.concatenate([rgb, sparse * DEPTH_IN_SCALE, coords], axis=1))
        stem = ad.gelu(self.stem(x_in))

        x3d = self._point_branch(sparse, stem) if cfg.use_3d else None

        feats = []
        x = stem
        for i, st in enumerate(self.stages):
            x = bl.downconv_forward(x, st.down)
            x = bl.sdc_forward(x, st.sdc)
            x = self._attention_tokens(x, lambda t: t + bl.xca_forward(t, st.xca))
            if i == 0:
                if cfg.use_3d and cfg.use_mxca:
                    half = (x.shape[2], x.shape[3])
                    fused = []
                    for s in range(n):
                        t2d = ad.transpose(ad.reshape(x[s:s + 1],
                                                      (x.shape[1], half[0] * half[1])))
                        t3d = ad.transpose(ad.reshape(x3d[s:s + 1],
                                                      (cfg.descriptor_dim, half[0] * half[1])))
                        cat = ad.concat([t2d, t3d], axis=1)
                        out = cat + bl.mxca_forward(t2d, t3d, self.stages[0].mxca)
                        fused.append(ad.reshape(ad.transpose(out),
                                                (1, out.shape[1], half[0], half[1])))
                    x = fused[0] if n == 1 else ad.concat(fused, axis=0)
                elif cfg.use_3d:
                    x = ad.concat([x, x3d], axis=1)
                elif cfg.use_mxca:
                    x = self._attention_tokens(
                        x, lambda t: t + bl.mxca_forward(
                            t, Tensor(np.zeros((t.shape[0], 0), dtype=self.dtype)),
                            self.stages[0].mxca))
            feats.append(x)

        s1, s2, s3, s4 = feats
        d = ad.gelu(self.bottleneck(s4))
        d = self.dec8(ad.concat([ad.upsample_nearest(d, 2), s3], axis=1))
        d = self.dec4(ad.concat([ad.upsample_nearest(d, 2), s2], axis=1))
        quarter = ad.softplus(self.head_quarter(d))
        d = self.dec2(ad.concat([ad.upsample_nearest(d, 2), s1], axis=1))
        half_map = ad.softplus(self.head_half(d))
        d = self.dec1(ad.concat([ad.upsample_nearest(d, 2), stem], axis=1))
        full = ad.softplus(self.head_full(d))

        out = {"full": full, "half": half_map, "quarter": quarter, "guidance": d}
        if cfg.use_spn:
            out["refined"] = self.refine(full, sparse, d)
        return out

    def refine(self, d_full: Tensor, sparse: np.ndarray, guidance: Tensor) -> Tensor:
        """Spatial-propagation refinement anchored on the initial prediction
        at pixels that carried sparse input."""
        mask = (np.asarray(sparse) > 0).astype(self.dtype)
        heads = bl.spn_heads(self.spn, guidance, mask)
        h = d_full
        for t in range(self.spn.iterations):
            h = bl.spn_step(h, d_full, self.spn, guidance, t, mask, heads=heads)
        return ad.maximum(h, 1e-6)

    def predict(self, rgb: np.ndarray, sparse: np.ndarray) -> np.ndarray:
        """Final dense depth (N, 1, H, W) in meters, without gradient tracking."""
        with ad.no_grad():
            out = self.forward(rgb, sparse)
            key = "refined" if "refined" in out else "full"
            return out[key].data.copy()

    def flops(self) -> dict[str, int]:
        """Analytic forward FLOPs per component at the configured input size."""
        cfg = self.config
        h, w = cfg.height, cfg.width
        out: dict[str, int] = {}
        out["stem"] = 2 * 6 * cfg.stem_channels * 9 * h * w
        c_prev = cfg.stem_channels
        hh, ww = h, w
        for i, width in enumerate(cfg.stage_widths):
            hh, ww = hh // 2, ww // 2
            down = 2 * c_prev * 9 * hh * ww + 2 * c_prev * width * hh * ww
            sdc = bl.sdc_flops(width, hh, ww, len(cfg.sdc_dilations[i]))
            xca = bl.xca_flops(hh * ww, width, width, cfg.xca_heads[i])
            out[f"stage{i + 1}"] = down + sdc + xca
            if i == 0:
                if cfg.use_mxca:
                    d_f = width + (cfg.descriptor_dim if cfg.use_3d else 0)
                    out["mxca"] = bl.xca_flops(hh * ww, d_f, d_f, 1)
                c_prev = self._stage1_out_channels()
            else:
                c_prev = width
        if cfg.use_3d:
            in_dim = 3 + 2 + cfg.stem_channels
            out["edgeconv"] = bl.edgeconv_flops(
                cfg.point_cap, cfg.edgeconv_k, in_dim,
                (cfg.descriptor_dim,) * cfg.edgeconv_layers)
            out["jpp"] = bl.jpp_flops(h // 2, w // 2, cfg.descriptor_dim)
        dec_hw = [(h // 8, w // 8, cfg.decoder_width + cfg.stage_widths[2], 64),
                  (h // 4, w // 4, 64 + cfg.stage_widths[1], 48),
                  (h // 2, w // 2, 48 + self._stage1_out_channels(), 32),
                  (h, w, 32 + cfg.stem_channels, 24)]
        dec = 2 * cfg.stage_widths[3] * cfg.decoder_width * (h // 16) * (w // 16)
        for hh2, ww2, cin, cout in dec_hw:
            dec += 2 * hh2 * ww2 * (cin * cout + cout * 9 + cout * cout)
        out["decoder"] = dec
        if cfg.use_spn:
            out["spn"] = bl.spn_flops(h, w, 24, cfg.spn_iterations)
        out["total"] = sum(v for k, v in out.items() if k != "total")
        return out
