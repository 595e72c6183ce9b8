"""Declarative run configuration: one JSON document for every module knob.

Validation is strict: unknown keys are rejected so config typos fail
loudly instead of silently using defaults.
"""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from .scene import SceneSpec
from .triplane import TriplaneConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TriplaneSection(_Strict):
    radius: float = 10.0
    half_height: float = 5.0
    n_r: int = 16
    n_z: int = 64
    n_theta: int = 128
    fine_n_r: int = 8
    fine_n_z: int = 32
    fine_n_theta: int = 64
    feature_dim: int = 16
    mode: str = "shared"          # or "isolated"
    attention_dim: int | None = None
    attention_layers: int = 1     # sequential residual passes per mechanism
    decoder_hidden: int = 32
    base_scale: float = 0.1       # seeded base-embedding magnitude

    def to_config(self) -> TriplaneConfig:
        return TriplaneConfig(self.radius, self.half_height, self.n_r, self.n_z,
                              self.n_theta, self.fine_n_r, self.fine_n_z,
                              self.fine_n_theta, self.feature_dim)


class RasterizerSection(_Strict):
    tile_size: int = 16
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pole_clamp_deg: float = 89.5
    max_radius_px: float = 512.0
    dilation: float = 0.3
    cutoff_sigma: float = 3.0
    threads: int = 1
    cube_face_size: int | None = None

    def to_options(self):
        from .rasterizer import RenderOptions
        return RenderOptions(self.tile_size, self.background, self.pole_clamp_deg,
                             self.max_radius_px, self.dilation, self.cutoff_sigma,
                             threads=self.threads, cube_face_size=self.cube_face_size)


class SceneSection(_Strict):
    room: tuple[float, float, float] = (6.0, 3.0, 4.0)
    checker_size: float = 0.5
    spacing: float = 0.05
    opacity: float = 0.92
    cameras: list[tuple[float, float, float]] = Field(
        default_factory=lambda: [(-0.5, 0.0, 0.0), (0.5, 0.0, 0.0)])
    feature_height: int = 64

    def to_spec(self, feature_dim: int, seed: int) -> SceneSpec:
        return SceneSpec(self.room, self.checker_size, self.spacing, self.opacity,
                         tuple(tuple(c) for c in self.cameras),
                         self.feature_height, feature_dim, seed)


class RetrievalSection(_Strict):
    temperature: float = 1.0


class PruneSection(_Strict):
    enabled: bool = False
    deviation_threshold: float = 0.5
    opacity_factor: float = 0.1
    opacity_floor: float = 1.0 / 255.0


class PipelineSection(_Strict):
    width: int = 1024
    height: int = 512
    target_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drop_surface: str | None = None   # mask one wall from the pixel-branch cloud


class RunConfig(_Strict):
    seed: int = 0
    scene: SceneSection = Field(default_factory=SceneSection)
    triplane: TriplaneSection = Field(default_factory=TriplaneSection)
    rasterizer: RasterizerSection = Field(default_factory=RasterizerSection)
    retrieval: RetrievalSection = Field(default_factory=RetrievalSection)
    prune: PruneSection = Field(default_factory=PruneSection)
    pipeline: PipelineSection = Field(default_factory=PipelineSection)

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        return RunConfig.model_validate(json.loads(Path(path).read_text()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=2) + "\n")
