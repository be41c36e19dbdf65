"""The acoustic network: phoneme encoder → cross-utterance fusion → variance
adaptor → masked mel-encoder → Conformer decoder → splice → PostNet.

Sequences are unbatched ([T, d] tensors); the trainer accumulates gradients
over examples instead of padding a batch dimension.  The same forward pass
serves training, synthesis, and editing: a per-phoneme mask says which
durations come from the duration predictor (none in training, the current
sentence in synthesis, just the replaced phonemes in editing).
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import records
from .context import CUR, TrainingExample
from .errors import InvalidConfig, InvalidInput
from .semantic import CrossUtteranceAttention, CUAttentionConfig, Fuse

TRAIN, INFER = "train", "infer"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    mel_bins: int = 80
    d_model: int = 256
    d_pbe: int = 768
    encoder_layers: int = 4
    encoder_heads: int = 2
    encoder_filters: int = 1024
    encoder_kernel: int = 9
    decoder_conformer_blocks: int = 4
    decoder_heads: int = 2
    decoder_filters: int = 1024
    decoder_kernel: int = 7
    melenc_layers: int = 2
    melenc_filters: int = 256
    melenc_kernel: int = 3
    postnet_layers: int = 5
    postnet_channels: int = 256
    postnet_kernel: int = 5
    variance_filters: int = 256
    variance_kernel: int = 3
    pitch_bins: int = 256
    pitch_min_hz: float = 50.0
    pitch_max_hz: float = 600.0
    energy_bins: int = 256
    energy_min: float = 0.0
    energy_max: float = 128.0
    dropout: float = 0.1
    cu: CUAttentionConfig = field(default_factory=CUAttentionConfig)

    def __post_init__(self):
        for name in (
            "vocab_size", "mel_bins", "d_model", "d_pbe", "encoder_layers",
            "encoder_heads", "encoder_filters", "encoder_kernel",
            "decoder_conformer_blocks", "decoder_heads", "decoder_filters",
            "decoder_kernel", "melenc_layers", "melenc_filters", "melenc_kernel",
            "postnet_layers", "postnet_channels", "postnet_kernel",
            "variance_filters", "variance_kernel", "pitch_bins", "energy_bins",
        ):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.d_model % self.encoder_heads or self.d_model % self.decoder_heads:
            raise InvalidConfig("d_model must be divisible by attention heads")
        if self.pitch_max_hz <= self.pitch_min_hz or self.energy_max <= self.energy_min:
            raise InvalidConfig("quantizer ranges must be increasing")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["cu"] = CUAttentionConfig(**d["cu"])
        return cls(**d)


@dataclass
class ModelOutputs:
    log_duration_pred: torch.Tensor  # [T_ph], log(frames+1) domain
    pitch_pred: torch.Tensor  # [T_ph], log1p(Hz) domain
    energy_pred: torch.Tensor  # [T_ph], log1p(energy) domain
    durations_used: torch.Tensor  # int64 [T_ph], frames actually expanded
    mel_before: torch.Tensor  # [T_fr, mel]
    mel_spliced: torch.Tensor  # [T_fr, mel]
    mel_after: torch.Tensor  # [T_fr, mel]
    current_frame_span: tuple  # on the T_fr axis actually produced


def sinusoidal_positions(length: int, dim: int, device=None) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float32, device=device).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float32, device=device)
        * (-math.log(10000.0) / dim)
    )
    enc = torch.zeros(length, dim, device=device)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div[: dim // 2])
    return enc


class SelfAttention(nn.Module):
    """Multi-head self-attention over an unbatched [T, d] sequence."""

    def __init__(self, d_model: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, return_weights: bool = False):
        T = x.shape[0]
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (T, self.heads, self.d_head)
        q = q.view(shape).transpose(0, 1)
        k = k.view(shape).transpose(0, 1)
        v = v.view(shape).transpose(0, 1)
        weights = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(self.d_head), dim=-1)
        ctx = self.dropout(weights) @ v
        out = self.out(ctx.transpose(0, 1).reshape(T, -1))
        return (out, weights) if return_weights else out


def conv1d_seq(conv: nn.Conv1d, x: torch.Tensor) -> torch.Tensor:
    """Apply a Conv1d to an unbatched [T, C] sequence."""
    return conv(x.t().unsqueeze(0)).squeeze(0).t()


class ConvFFN(nn.Module):
    """Position-wise feed-forward realized as two 1-d convolutions."""

    def __init__(self, d_model: int, filters: int, kernel: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv1d(d_model, filters, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(filters, d_model, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = torch.relu(conv1d_seq(self.conv1, x))
        return self.dropout(conv1d_seq(self.conv2, y))


class EncoderBlock(nn.Module):
    """Pre-norm transformer block with a convolutional feed-forward."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = SelfAttention(cfg.d_model, cfg.encoder_heads, cfg.dropout)
        self.ffn = ConvFFN(cfg.d_model, cfg.encoder_filters, cfg.encoder_kernel, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x):
        x = x + self.dropout(self.attn(self.norm1(x)))
        return x + self.ffn(self.norm2(x))


class PhonemeEncoder(nn.Module):
    """Token + sinusoidal position + segment (PREV/CUR/NEXT) embeddings, then
    a stack of self-attention blocks."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tokens = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.segments = nn.Embedding(3, cfg.d_model)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.encoder_layers))
        self.norm = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, phoneme_ids: torch.Tensor, segment_ids: torch.Tensor):
        if phoneme_ids.min() < 0 or phoneme_ids.max() >= self.cfg.vocab_size:
            raise InvalidInput("phoneme id outside vocabulary")
        x = self.tokens(phoneme_ids) + self.segments(segment_ids)
        x = x + sinusoidal_positions(x.shape[0], self.cfg.d_model, x.device)
        x = self.dropout(x)
        for block in self.blocks:
            x = block(x)
        return self.norm(x)


class Quantizer:
    """Maps scalars to embedding bins; bin 0 of the pitch table is unvoiced."""

    def __init__(self, edges: np.ndarray, reserve_zero: bool):
        self.edges = edges
        self.reserve_zero = reserve_zero
        self.n_bins = len(edges) + 1 + (1 if reserve_zero else 0)

    def __call__(self, values: torch.Tensor) -> torch.Tensor:
        edges = torch.as_tensor(self.edges, dtype=values.dtype, device=values.device)
        bins = torch.bucketize(values, edges)
        if self.reserve_zero:
            bins = torch.where(values > 0, bins + 1, torch.zeros_like(bins))
        return bins.long()

    @classmethod
    def pitch(cls, cfg: ModelConfig):
        # log-spaced interior edges; everything ≤0 is the unvoiced bin
        edges = np.geomspace(cfg.pitch_min_hz, cfg.pitch_max_hz, cfg.pitch_bins - 1)
        return cls(edges, reserve_zero=True)

    @classmethod
    def energy(cls, cfg: ModelConfig):
        edges = np.linspace(cfg.energy_min, cfg.energy_max, cfg.energy_bins - 1)
        return cls(edges, reserve_zero=False)


class VariancePredictor(nn.Module):
    """Two conv layers with ReLU→LayerNorm→dropout, then a scalar head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        k, f = cfg.variance_kernel, cfg.variance_filters
        self.conv1 = nn.Conv1d(cfg.d_model, f, k, padding=k // 2)
        self.conv2 = nn.Conv1d(f, f, k, padding=k // 2)
        self.norm1 = nn.LayerNorm(f)
        self.norm2 = nn.LayerNorm(f)
        self.dropout = nn.Dropout(cfg.dropout)
        self.head = nn.Linear(f, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.dropout(self.norm1(torch.relu(conv1d_seq(self.conv1, x))))
        x = self.dropout(self.norm2(torch.relu(conv1d_seq(self.conv2, x))))
        return self.head(x).squeeze(-1)


class VarianceAdaptor(nn.Module):
    """Duration/pitch/energy prediction, conditioning, and length regulation.

    Pitch and energy are quantized per phoneme, embedded, and added to the
    hidden sequence before expansion.  predict_mask says which phonemes take
    round(exp(log_duration_pred)) (clamped ≥1) instead of target durations.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.duration = VariancePredictor(cfg)
        self.pitch = VariancePredictor(cfg)
        self.energy = VariancePredictor(cfg)
        self.pitch_quantizer = Quantizer.pitch(cfg)
        self.energy_quantizer = Quantizer.energy(cfg)
        self.pitch_embed = nn.Embedding(self.pitch_quantizer.n_bins, cfg.d_model)
        self.energy_embed = nn.Embedding(self.energy_quantizer.n_bins, cfg.d_model)

    def forward(self, hidden, targets=None, predict_mask=None):
        """Returns (frame_hidden, log_duration_pred, pitch_pred, energy_pred,
        durations_used).  targets is a dict with durations/pitch/energy
        tensors (teacher forcing); predict_mask a bool [T_ph] tensor.

        Pitch/energy predictions live in the log1p domain (unvoiced pitch 0
        stays 0 there); the quantizers run on raw Hz / raw energy, so
        predicted values pass through expm1 before binning.
        """
        T_ph = hidden.shape[0]
        log_duration_pred = self.duration(hidden)
        pitch_pred = self.pitch(hidden)
        energy_pred = self.energy(hidden)

        if predict_mask is None:
            predict_mask = torch.zeros(T_ph, dtype=torch.bool, device=hidden.device)
        if (~predict_mask).any() and targets is None:
            raise InvalidInput("duration targets required for non-predicted phonemes")

        predicted = torch.clamp(torch.round(torch.exp(log_duration_pred)), min=1).long()

        def back_to_raw(log1p_pred):
            return torch.expm1(torch.clamp(log1p_pred, min=0.0, max=12.0))

        if targets is not None:
            durations_used = torch.where(predict_mask, predicted, targets["durations"])
            pitch_values = torch.where(predict_mask, back_to_raw(pitch_pred), targets["pitch"])
            energy_values = torch.where(
                predict_mask, back_to_raw(energy_pred), targets["energy"]
            )
        else:
            durations_used = predicted
            pitch_values = back_to_raw(pitch_pred)
            energy_values = back_to_raw(energy_pred)

        conditioned = (
            hidden
            + self.pitch_embed(self.pitch_quantizer(pitch_values.detach()))
            + self.energy_embed(self.energy_quantizer(energy_values.detach()))
        )
        frame_hidden = torch.repeat_interleave(conditioned, durations_used, dim=0)
        return frame_hidden, log_duration_pred, pitch_pred, energy_pred, durations_used


class MaskedMelEncoder(nn.Module):
    """Replaces flagged frames with a learned MASK vector, then applies two
    Conv1d layers (ReLU→LayerNorm→dropout each)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.mask_embedding = nn.Parameter(torch.zeros(cfg.mel_bins))
        nn.init.normal_(self.mask_embedding, std=0.02)
        k = cfg.melenc_kernel
        channels = [cfg.mel_bins] + [cfg.melenc_filters] * cfg.melenc_layers
        self.convs = nn.ModuleList(
            nn.Conv1d(channels[i], channels[i + 1], k, padding=k // 2)
            for i in range(cfg.melenc_layers)
        )
        self.norms = nn.ModuleList(
            nn.LayerNorm(cfg.melenc_filters) for _ in range(cfg.melenc_layers)
        )
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, mel_input: torch.Tensor, mask_flags: torch.Tensor) -> torch.Tensor:
        if mel_input.shape[0] != mask_flags.shape[0]:
            raise InvalidInput("mel input and mask flags disagree on length")
        x = torch.where(mask_flags.unsqueeze(-1), self.mask_embedding, mel_input)
        for conv, norm in zip(self.convs, self.norms):
            x = self.dropout(norm(torch.relu(conv1d_seq(conv, x))))
        return x


class ConformerBlock(nn.Module):
    """Half-FFN → self-attention → conv module → half-FFN, all pre-norm."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.ffn1 = ConvFFN(d, cfg.decoder_filters, 1, cfg.dropout)
        self.ffn2 = ConvFFN(d, cfg.decoder_filters, 1, cfg.dropout)
        self.attn = SelfAttention(d, cfg.decoder_heads, cfg.dropout)
        self.pointwise1 = nn.Conv1d(d, 2 * d, 1)
        self.depthwise = nn.Conv1d(
            d, d, cfg.decoder_kernel, padding=cfg.decoder_kernel // 2, groups=d
        )
        self.pointwise2 = nn.Conv1d(d, d, 1)
        self.norm_ffn1 = nn.LayerNorm(d)
        self.norm_ffn2 = nn.LayerNorm(d)
        self.norm_attn = nn.LayerNorm(d)
        self.norm_conv = nn.LayerNorm(d)
        self.norm_mid = nn.LayerNorm(d)
        self.norm_out = nn.LayerNorm(d)
        self.dropout = nn.Dropout(cfg.dropout)

    def _conv_module(self, x):
        y = conv1d_seq(self.pointwise1, self.norm_conv(x))
        y = torch.nn.functional.glu(y, dim=-1)
        y = torch.nn.functional.silu(self.norm_mid(conv1d_seq(self.depthwise, y)))
        return self.dropout(conv1d_seq(self.pointwise2, y))

    def forward(self, x):
        x = x + 0.5 * self.ffn1(self.norm_ffn1(x))
        x = x + self.dropout(self.attn(self.norm_attn(x)))
        x = x + self._conv_module(x)
        x = x + 0.5 * self.ffn2(self.norm_ffn2(x))
        return self.norm_out(x)


class Decoder(nn.Module):
    """Fuses variance-adaptor and mel-encoder streams, runs the Conformer
    stack, and projects to mel bins."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.input_proj = nn.Linear(cfg.d_model + cfg.melenc_filters, cfg.d_model)
        self.blocks = nn.ModuleList(
            ConformerBlock(cfg) for _ in range(cfg.decoder_conformer_blocks)
        )
        self.mel_head = nn.Linear(cfg.d_model, cfg.mel_bins)

    def forward(self, frame_hidden: torch.Tensor, melenc_out: torch.Tensor):
        if frame_hidden.shape[0] != melenc_out.shape[0]:
            raise InvalidInput(
                f"decoder streams disagree: {frame_hidden.shape[0]} "
                f"vs {melenc_out.shape[0]} frames"
            )
        x = self.input_proj(torch.cat([frame_hidden, melenc_out], dim=-1))
        x = x + sinusoidal_positions(x.shape[0], x.shape[1], x.device)
        for block in self.blocks:
            x = block(x)
        return self.mel_head(x)


class PostNet(nn.Module):
    """Residual refinement: 5 Conv1d layers, tanh on all but the last."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        k, ch, n = cfg.postnet_kernel, cfg.postnet_channels, cfg.postnet_layers
        dims = [cfg.mel_bins] + [ch] * (n - 1) + [cfg.mel_bins]
        self.convs = nn.ModuleList(
            nn.Conv1d(dims[i], dims[i + 1], k, padding=k // 2) for i in range(n)
        )
        self.norms = nn.ModuleList(nn.LayerNorm(dims[i + 1]) for i in range(n - 1))
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        x = mel
        for conv, norm in zip(self.convs, self.norms):
            x = self.dropout(norm(torch.tanh(conv1d_seq(conv, x))))
        return conv1d_seq(self.convs[-1], x)


def splice(mel_before, reference_mel, current_frame_span):
    """Ground truth outside the current span, prediction inside."""
    start, end = current_frame_span
    T = mel_before.shape[0]
    if not 0 <= start <= end <= T:
        raise InvalidInput(f"span [{start},{end}) out of range for {T} frames")
    keep = torch.zeros(T, 1, dtype=torch.bool, device=mel_before.device)
    keep[start:end] = True
    return torch.where(keep, mel_before, reference_mel)


class AcousticModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.phoneme_encoder = PhonemeEncoder(cfg)
        self.cu_attention = CrossUtteranceAttention(cfg.d_model, cfg.d_pbe, cfg.cu)
        self.fuse = Fuse(cfg.d_model)
        self.variance = VarianceAdaptor(cfg)
        self.mel_encoder = MaskedMelEncoder(cfg)
        self.decoder = Decoder(cfg)
        self.postnet = PostNet(cfg)

    def splice_and_refine(self, mel_before, reference_mel, current_frame_span):
        """Ground truth outside the span, prediction inside, then the
        residual PostNet pass over the full spliced sequence."""
        mel_spliced = splice(mel_before, reference_mel, current_frame_span)
        return mel_spliced, mel_spliced + self.postnet(mel_spliced)

    def _plan_frames(self, example, durations_used, predict_mask):
        """Walk the phoneme sequence once, building the mel-encoder input and
        the splice reference on the axis of the durations actually used.

        Phonemes with predicted durations contribute that many sentinel
        (masked) rows; the rest carry their original input rows and flags.
        Original frame positions advance by the example's target durations.
        """
        mel_in = torch.as_tensor(example.concat_mel)
        target = torch.as_tensor(example.mel_target)
        flags = torch.as_tensor(example.mask_flags)
        mel_bins = mel_in.shape[1]

        rows_in, rows_ref, rows_flag = [], [], []
        cursor = 0
        for k in range(example.n_phonemes):
            d_orig = int(example.durations[k])
            if bool(predict_mask[k]):
                d_used = int(durations_used[k])
                rows_in.append(torch.zeros(d_used, mel_bins))
                rows_ref.append(torch.zeros(d_used, mel_bins))
                rows_flag.append(torch.ones(d_used, dtype=torch.bool))
            else:
                rows_in.append(mel_in[cursor : cursor + d_orig])
                rows_ref.append(target[cursor : cursor + d_orig])
                rows_flag.append(flags[cursor : cursor + d_orig])
            cursor += d_orig

        ph_start, ph_end = example.current_phoneme_span
        used = np.concatenate([[0], np.cumsum(np.asarray(durations_used, dtype=np.int64))])
        new_span = (int(used[ph_start]), int(used[ph_end]))
        return (
            torch.cat(rows_in) if rows_in else torch.zeros(0, mel_bins),
            torch.cat(rows_ref) if rows_ref else torch.zeros(0, mel_bins),
            torch.cat(rows_flag) if rows_flag else torch.zeros(0, dtype=torch.bool),
            new_span,
        )

    def forward(
        self,
        example: TrainingExample,
        pbes,
        mode: str = TRAIN,
        predict_duration_mask=None,
    ) -> ModelOutputs:
        if mode not in (TRAIN, INFER):
            raise InvalidInput(f"unknown mode {mode!r}")
        anchor = next(self.parameters())
        device, dtype = anchor.device, anchor.dtype
        phoneme_ids = torch.as_tensor(example.phoneme_ids, device=device)
        segment_ids = torch.as_tensor(example.segment_ids, device=device)
        pbes = torch.as_tensor(np.asarray(pbes), dtype=dtype, device=device)

        hidden = self.phoneme_encoder(phoneme_ids, segment_ids)
        fused = self.fuse(hidden, self.cu_attention(hidden, pbes))

        targets = {
            "durations": torch.as_tensor(example.durations, device=device),
            "pitch": torch.as_tensor(example.pitch_ph, dtype=dtype, device=device),
            "energy": torch.as_tensor(example.energy_ph, dtype=dtype, device=device),
        }
        if predict_duration_mask is None:
            if mode == TRAIN:
                predict_mask = torch.zeros_like(phoneme_ids, dtype=torch.bool)
            else:
                predict_mask = segment_ids == CUR
        else:
            predict_mask = torch.as_tensor(predict_duration_mask, device=device)
            if predict_mask.shape != phoneme_ids.shape:
                raise InvalidInput("predict_duration_mask length mismatch")

        frame_hidden, log_dur, pitch, energy, durations_used = self.variance(
            fused, targets=targets, predict_mask=predict_mask
        )

        mel_input, reference, flags, span = self._plan_frames(
            example, durations_used.tolist(), predict_mask.tolist()
        )
        melenc_out = self.mel_encoder(mel_input.to(device=device, dtype=dtype), flags.to(device))
        mel_before = self.decoder(frame_hidden, melenc_out)
        mel_spliced, mel_after = self.splice_and_refine(
            mel_before, reference.to(device=device, dtype=dtype), span
        )
        return ModelOutputs(
            log_duration_pred=log_dur,
            pitch_pred=pitch,
            energy_pred=energy,
            durations_used=durations_used,
            mel_before=mel_before,
            mel_spliced=mel_spliced,
            mel_after=mel_after,
            current_frame_span=span,
        )


def save_checkpoint(model: AcousticModel, path, step: int = 0, extra=None):
    """Checkpoint = record file of parameter tensors + config in metadata."""
    arrays = {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in model.state_dict().items()
    }
    meta = {"config": model.cfg.to_dict(), "step": step}
    if extra:
        meta.update(extra)
    records.write_record(path, arrays, meta)


def load_checkpoint(path):
    """Returns (model, meta); every tensor shape is validated against the
    config stored alongside the weights."""
    arrays, meta = records.read_record(path)
    cfg = ModelConfig.from_dict(meta["config"])
    model = AcousticModel(cfg)
    state = model.state_dict()
    if set(arrays) != set(state):
        missing = set(state) ^ set(arrays)
        raise InvalidInput(f"checkpoint parameter names mismatch: {sorted(missing)[:5]}")
    for name, tensor in state.items():
        if tuple(arrays[name].shape) != tuple(tensor.shape):
            raise InvalidInput(
                f"checkpoint shape mismatch for {name}: "
                f"{arrays[name].shape} vs {tuple(tensor.shape)}"
            )
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays.items()})
    return model, meta
