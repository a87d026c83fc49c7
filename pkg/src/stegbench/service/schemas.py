"""Request/response bodies for the workbench service.

Binary artifacts (PGM rasters, cost dumps, checkpoints) travel base64-encoded;
experiment configs travel as the flat key=value text plus an override map, so
the service and the CLI share one parser.
"""

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class TripleFields(BaseModel):
    sigma_mult: float = 1.0
    epsilon_mult: float = 1.0
    wetcost_mult: float = 1.0


class EmbedRequest(TripleFields):
    cover_pgm: str = Field(description="base64 PGM")
    rate_bpp: float = 0.4
    seed: int = 0


class EmbedResponse(BaseModel):
    stego_pgm: str
    change_count: int
    sidecar: str


class CostMapRequest(TripleFields):
    cover_pgm: str


class CostMapResponse(BaseModel):
    cost_blob: str = Field(description="base64 binary cost dump")
    contrast: float
    wet_plus: int
    wet_minus: int


class ConfigRequest(BaseModel):
    config_text: str = ""
    overrides: dict[str, str] = Field(default_factory=dict)


class AssistedRequest(ConfigRequest):
    mode: str | None = None


class TransferRequest(ConfigRequest):
    alt_dataset: str | None = None


class PrecomputeRequest(ConfigRequest):
    materialize: bool = False


class PrecomputeResponse(BaseModel):
    manifest_csv: str
    cell_count: int
    cover_count: int
    bytes_used: int
    per_cell_bytes: int
    materialized: bool


class DetectorTrainResponse(BaseModel):
    checkpoint: str
    kind: str
    holdout_error: float


class AssistantTrainResponse(BaseModel):
    checkpoint: str
    head: str
    history: list[float]
    best_epoch: int


class FragmentPayload(BaseModel):
    name: str
    data: dict
    csv_files: dict[str, str] = Field(default_factory=dict)
    pgm_files: dict[str, str] = Field(default_factory=dict, description="base64 values")
    timings: dict[str, float] = Field(default_factory=dict)


class FragmentListResponse(BaseModel):
    fragments: list[FragmentPayload]


class ReportRequest(BaseModel):
    fragments: list[FragmentPayload]


class ReportResponse(BaseModel):
    files: dict[str, str] = Field(description="filename to base64 content")
