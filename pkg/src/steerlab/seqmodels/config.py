"""Encoder configuration with desk-scale width scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

ENCODER_KINDS = ("lstm", "tcn", "transformer")

MIN_WIDTH = 8


@dataclass
class EncoderConfig:
    """One of three causal sequence encoders.

    Width fields hold full-scale values; `scale` multiplies every width for
    desk-scale runs (default 0.125: LSTM hidden 64, TCN channels 32, fc 16,
    transformer d_model 32, ffn 128). Scaled widths must be integers >= 8.
    """

    kind: str
    in_channels: int
    scale: float = 0.125
    lstm_hidden: int = 512
    lstm_layers: int = 3
    lstm_dropout: float = 0.2
    tcn_blocks: int = 4
    tcn_channels: int = 256
    tcn_fc: tuple[int, int] = (128, 128)
    tcn_dropout: float = 0.2
    tcn_kernel: int = 3
    tr_d_model: int = 256
    tr_heads: int = 8
    tr_ffn: int = 1024
    tr_layers: int = 2

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        for name, value in self._width_fields().items():
            scaled = value * self.scale
            if abs(scaled - round(scaled)) > 1e-9:
                raise ValueError(
                    f"{name}={value} scaled by {self.scale} is not an integer"
                )
            if round(scaled) < MIN_WIDTH:
                raise ValueError(
                    f"{name}={value} scaled by {self.scale} is below {MIN_WIDTH}"
                )
        if self.scaled("tr_d_model") % self.tr_heads != 0:
            raise ValueError("scaled d_model must divide evenly into heads")

    def _width_fields(self) -> dict[str, int]:
        widths = {
            "lstm": {"lstm_hidden": self.lstm_hidden},
            "tcn": {
                "tcn_channels": self.tcn_channels,
                "tcn_fc0": self.tcn_fc[0],
                "tcn_fc1": self.tcn_fc[1],
            },
            "transformer": {
                "tr_d_model": self.tr_d_model,
                "tr_ffn": self.tr_ffn,
            },
        }
        return widths[self.kind]

    def scaled(self, field_name: str) -> int:
        value = getattr(self, field_name)
        return int(round(value * self.scale))

    @property
    def hidden_dim(self) -> int:
        """Width of the per-step representation exposed for probing/fusion."""
        if self.kind == "lstm":
            return self.scaled("lstm_hidden")
        if self.kind == "tcn":
            return int(round(self.tcn_fc[1] * self.scale))
        return self.scaled("tr_d_model")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "in_channels": self.in_channels,
            "scale": self.scale,
            "lstm_hidden": self.lstm_hidden,
            "lstm_layers": self.lstm_layers,
            "lstm_dropout": self.lstm_dropout,
            "tcn_blocks": self.tcn_blocks,
            "tcn_channels": self.tcn_channels,
            "tcn_fc": list(self.tcn_fc),
            "tcn_dropout": self.tcn_dropout,
            "tcn_kernel": self.tcn_kernel,
            "tr_d_model": self.tr_d_model,
            "tr_heads": self.tr_heads,
            "tr_ffn": self.tr_ffn,
            "tr_layers": self.tr_layers,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EncoderConfig":
        obj = dict(obj)
        if "tcn_fc" in obj:
            obj["tcn_fc"] = tuple(obj["tcn_fc"])
        return cls(**obj)
