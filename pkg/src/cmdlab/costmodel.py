"""Analytic FLOP / parameter / activation accounting for configured networks.

Counting convention (printed in every report):
  * one multiply-add = 2 FLOPs;
  * linear layer over n tokens, d_in -> d_out: 2 * n * d_in * d_out FLOPs;
  * attention over n tokens at width d (head-merged): 4*n*d^2 + 2*n^2*d;
  * MLP (hidden ratio 4): 16 * n * d^2;
  * normalizations, softmaxes, means and activations are not counted.

Only matmul work is modeled, so absolute numbers from external profilers
are not comparable; ratios between configurations under the same
convention are.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .autoencoder import AEConfig
from .denoisers import DenoiserConfig
from .errors import ConfigError

CONVENTION = ("multiply-add=2 FLOPs; linear=2*n*din*dout; "
              "attention=4*n*d^2+2*n^2*d; mlp(x4)=16*n*d^2; "
              "norms/softmax/reductions uncounted")


@dataclass(frozen=True)
class LayerCost:
    name: str
    flops: int
    params: int
    activation_elems: int


@dataclass
class CostReport:
    role: str
    rows: list[LayerCost] = field(default_factory=list)
    ratios: dict[str, float] = field(default_factory=dict)
    convention: str = CONVENTION

    def add(self, name: str, flops: int, params: int, act: int):
        if min(flops, params, act) < 0:
            raise ConfigError(f"negative count in row {name!r}")
        self.rows.append(LayerCost(name, int(flops), int(params), int(act)))

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_activation_elems(self) -> int:
        return sum(r.activation_elems for r in self.rows)

    def to_tsv(self) -> str:
        lines = [f"# convention: {self.convention}",
                 "name\tflops\tparams\tactivation_elems"]
        for r in self.rows:
            lines.append(f"{r.name}\t{r.flops}\t{r.params}\t{r.activation_elems}")
        lines.append(f"TOTAL\t{self.total_flops}\t{self.total_params}"
                     f"\t{self.total_activation_elems}")
        for k, v in self.ratios.items():
            lines.append(f"# ratio {k}\t{v!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max((len(r.name) for r in self.rows), default=4) + 2
        lines = [f"cost report: {self.role}", f"convention: {self.convention}", ""]
        lines.append(f"{'layer':<{width}}{'FLOPs':>16}{'params':>12}{'act elems':>12}")
        for r in self.rows:
            lines.append(f"{r.name:<{width}}{r.flops:>16}{r.params:>12}"
                         f"{r.activation_elems:>12}")
        lines.append(f"{'TOTAL':<{width}}{self.total_flops:>16}{self.total_params:>12}"
                     f"{self.total_activation_elems:>12}")
        if self.ratios:
            lines.append("")
            for k, v in self.ratios.items():
                lines.append(f"{k}: {v:.6g}")
        return "\n".join(lines) + "\n"


def _linear(report: CostReport, name: str, tokens: int, din: int, dout: int):
    report.add(name, 2 * tokens * din * dout, din * dout + dout, tokens * dout)


def _attention(report: CostReport, name: str, n: int, d: int, seqs: int = 1):
    report.add(name, seqs * (4 * n * d * d + 2 * n * n * d),
               4 * d * d + 4 * d, seqs * n * d)


def _mlp(report: CostReport, name: str, n: int, d: int, seqs: int = 1):
    report.add(name, seqs * 16 * n * d * d, 8 * d * d + 5 * d, seqs * 5 * n * d)


def _modulation(report: CostReport, name: str, d: int, parts: int = 6):
    _linear(report, name, 1, d, parts * d)


def _dit_body(report: CostReport, n: int, cfg: DenoiserConfig, out_tokens: int,
              out_dim: int):
    d = cfg.hidden_dim
    _linear(report, "t_embed.mlp1", 1, d, d)
    _linear(report, "t_embed.mlp2", 1, d, d)
    report.add("class_embed", 0, (cfg.num_classes + 1) * d, d)
    for i in range(cfg.depth):
        _modulation(report, f"block{i}.modulation", d)
        _attention(report, f"block{i}.attn", n, d)
        _mlp(report, f"block{i}.mlp", n, d)
    _modulation(report, "final.modulation", d, parts=2)
    _linear(report, "final.proj", out_tokens, d, out_dim)


def flops_network(config, input_shape: tuple[int, ...], role: str) -> CostReport:
    """Per-layer cost report for one forward pass of the configured network.

    Roles: "autoencoder" (AEConfig, video [C, L, H, W]), "content"
    (DenoiserConfig, frame [C, H, W]), "motion" (DenoiserConfig,
    ((D, L, H', W'), (C, H, W))), "monolithic_baseline" (DenoiserConfig,
    video [C, L, H, W]) — a width/depth-matched transformer over the full
    L*H'*W' spatiotemporal token grid.
    """
    report = CostReport(role=role)
    if role == "autoencoder":
        if not isinstance(config, AEConfig):
            raise ConfigError("autoencoder role requires an AEConfig")
        c, l, h, w = input_shape
        ph, pw = config.input_patch
        if h % ph or w % pw:
            raise ConfigError(f"input_patch {config.input_patch} must divide ({h}, {w})")
        hg, wg = h // ph, w // pw
        d = config.hidden_dim
        n_all = l * hg * wg
        _linear(report, "enc.patch_embed", n_all, c * ph * pw, d)
        _space_time_blocks(report, "enc", config.depth, l, hg * wg, d)
        weight_ch = 1 if config.channel_shared_weights else c
        _linear(report, "enc.importance_head", n_all, d, weight_ch * ph * pw)
        _linear(report, "enc.motion_head", l * (hg + wg), d, config.motion_channels)
        _linear(report, "dec.content_embed", hg * wg, c * ph * pw, d)
        _linear(report, "dec.motion_embed", l * (hg + wg), config.motion_channels, d)
        _space_time_blocks(report, "dec", config.depth, l, hg * wg, d)
        _linear(report, "dec.unpatch", n_all, d, c * ph * pw)
    elif role == "content":
        if not isinstance(config, DenoiserConfig):
            raise ConfigError("content role requires a DenoiserConfig")
        c, h, w = input_shape
        p = config.patch
        if h % p or w % p:
            raise ConfigError(f"patch {p} must divide frame size ({h}, {w})")
        n = (h // p) * (w // p)
        _linear(report, "embed", n, c * p * p, config.hidden_dim)
        _dit_body(report, n, config, n, c * p * p)
    elif role == "motion":
        if not isinstance(config, DenoiserConfig):
            raise ConfigError("motion role requires a DenoiserConfig")
        (dz, l, hg, wg), (c, h, w) = input_shape
        zp, cp = config.z_patch, config.content_patch
        if l % zp or hg % zp or wg % zp or hg % cp or wg % cp:
            raise ConfigError("patch sizes must divide the latent/feature grids")
        n_z = (l // zp) * (hg // zp) + (l // zp) * (wg // zp)
        n_cond = (hg // cp) * (wg // cp)
        cph, cpw = cp * (h // hg), cp * (w // wg)
        d = config.hidden_dim
        _linear(report, "zx_embed", (l // zp) * (hg // zp), dz * zp * zp, d)
        _linear(report, "zy_embed", (l // zp) * (wg // zp), dz * zp * zp, d)
        _linear(report, "cond_embed", n_cond, c * cph * cpw, d)
        _dit_body(report, n_z + n_cond, config, n_z, dz * zp * zp)
    elif role == "monolithic_baseline":
        if not isinstance(config, DenoiserConfig):
            raise ConfigError("monolithic_baseline role requires a DenoiserConfig")
        c, l, h, w = input_shape
        p = config.patch
        if h % p or w % p:
            raise ConfigError(f"patch {p} must divide frame size ({h}, {w})")
        n = l * (h // p) * (w // p)
        _linear(report, "embed", n, c * p * p, config.hidden_dim)
        _dit_body(report, n, config, n, c * p * p)
    else:
        raise ConfigError(f"unknown role {role!r}")
    return report


def linear_layer_report(tokens: int, din: int, dout: int) -> CostReport:
    """Cost of a bare one-linear-layer network (convention sanity check)."""
    report = CostReport(role="linear")
    _linear(report, "linear", tokens, din, dout)
    return report


def _space_time_blocks(report: CostReport, prefix: str, depth: int, l: int,
                       n_space: int, d: int):
    # even blocks attend spatially (l sequences of n_space tokens),
    # odd blocks temporally (n_space sequences of l tokens)
    for i in range(depth):
        if i % 2 == 0:
            _attention(report, f"{prefix}.block{i}.attn(spatial)", n_space, d, seqs=l)
            _mlp(report, f"{prefix}.block{i}.mlp", n_space, d, seqs=l)
        else:
            _attention(report, f"{prefix}.block{i}.attn(temporal)", l, d, seqs=n_space)
            _mlp(report, f"{prefix}.block{i}.mlp", l, d, seqs=n_space)


def latent_video_sizes(ae_cfg: AEConfig, video_shape: tuple[int, int, int, int]):
    """(latent size C*H*W + D*L*(H'+W'), video size C*L*H*W)."""
    c, l, h, w = video_shape
    ph, pw = ae_cfg.input_patch
    latent = c * h * w + ae_cfg.motion_channels * l * (h // ph + w // pw)
    return latent, c * l * h * w


def compare_report(content: tuple[DenoiserConfig, tuple], motion: tuple[DenoiserConfig, tuple],
                   baseline: tuple[DenoiserConfig, tuple],
                   ae: tuple[AEConfig, tuple],
                   content_steps: int, motion_steps: int,
                   baseline_steps: int) -> CostReport:
    """Total sampling compute of the factorized pipeline vs. a monolithic
    spatiotemporal transformer: per-step forward FLOPs times the per-stage
    step counts (one forward per step; guidance doubling applies equally to
    both sides and cancels in the ratio)."""
    report = CostReport(role="comparison")
    content_rep = flops_network(content[0], content[1], "content")
    motion_rep = flops_network(motion[0], motion[1], "motion")
    baseline_rep = flops_network(baseline[0], baseline[1], "monolithic_baseline")
    content_total, motion_total = content_rep.total_flops, motion_rep.total_flops
    baseline_total = baseline_rep.total_flops
    report.add(f"content x{content_steps} steps", content_total * content_steps,
               content_rep.total_params, content_rep.total_activation_elems)
    report.add(f"motion x{motion_steps} steps", motion_total * motion_steps,
               motion_rep.total_params, motion_rep.total_activation_elems)
    cmd_total = content_total * content_steps + motion_total * motion_steps
    report.add(f"baseline x{baseline_steps} steps", baseline_total * baseline_steps,
               baseline_rep.total_params, baseline_rep.total_activation_elems)
    latent, video = latent_video_sizes(ae[0], ae[1])
    report.ratios["sampling_flops_baseline_over_cmd"] = \
        baseline_total * baseline_steps / cmd_total
    report.ratios["latent_size"] = float(latent)
    report.ratios["video_size"] = float(video)
    report.ratios["latent_over_video"] = latent / video
    report.ratios["compression"] = video / latent
    return report
