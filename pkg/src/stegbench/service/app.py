"""FastAPI wrapper around the workbench library.

Every endpoint is stateless: requests carry full configs and artifacts, so
identical requests return identical bodies (timing fields aside). ValueErrors
from the library surface as HTTP 400 with the message as detail.
"""

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..assistant import cache_to_csv, precompute_grid, save_assistant
from ..costs import ParameterTriple, compute_cost_map, cost_contrast, dump_cost
from ..detectors import error_rate, evaluate, save_detector
from ..embedding import embed, write_sidecar
from ..experiments import (
    ExperimentRun,
    Fragment,
    parse_config,
    render_report,
    run_full,
)
from ..media import read_pgm, write_pgm
from ..rng import derive_seed
from .schemas import (
    AssistantTrainResponse,
    AssistedRequest,
    ConfigRequest,
    CostMapRequest,
    CostMapResponse,
    DetectorTrainResponse,
    EmbedRequest,
    EmbedResponse,
    FragmentListResponse,
    FragmentPayload,
    HealthResponse,
    PrecomputeRequest,
    PrecomputeResponse,
    ReportRequest,
    ReportResponse,
    TransferRequest,
)


def _config_of(req: ConfigRequest):
    return parse_config(req.config_text, dict(req.overrides))


def _fragment_payload(frag: Fragment) -> FragmentPayload:
    return FragmentPayload(**frag.to_payload())


def create_app() -> FastAPI:
    app = FastAPI(title="stegbench", version=__version__)

    @app.exception_handler(ValueError)
    async def bad_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    async def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/embed", response_model=EmbedResponse)
    async def embed_endpoint(req: EmbedRequest):
        cover = read_pgm(base64.b64decode(req.cover_pgm))
        triple = ParameterTriple(req.sigma_mult, req.epsilon_mult, req.wetcost_mult)
        st = embed(cover, triple, req.rate_bpp, req.seed)
        return EmbedResponse(
            stego_pgm=base64.b64encode(write_pgm(st.pixels)).decode("ascii"),
            change_count=st.change_count,
            sidecar=write_sidecar(st, req.rate_bpp),
        )

    @app.post("/cost-map", response_model=CostMapResponse)
    async def cost_map_endpoint(req: CostMapRequest):
        cover = read_pgm(base64.b64decode(req.cover_pgm))
        triple = ParameterTriple(req.sigma_mult, req.epsilon_mult, req.wetcost_mult)
        c = compute_cost_map(cover, triple)
        wet_plus, wet_minus = c.wet_mask()
        return CostMapResponse(
            cost_blob=base64.b64encode(dump_cost(c)).decode("ascii"),
            contrast=cost_contrast(c),
            wet_plus=int(np.count_nonzero(wet_plus)),
            wet_minus=int(np.count_nonzero(wet_minus)),
        )

    @app.post("/detector/train", response_model=DetectorTrainResponse)
    async def train_detector_endpoint(req: ConfigRequest):
        run = ExperimentRun(_config_of(req))
        model = run.detector("A")
        _, held = run.split()
        err = error_rate(evaluate(model, run.default_pairs(held)))
        return DetectorTrainResponse(
            checkpoint=base64.b64encode(save_detector(model)).decode("ascii"),
            kind=model.kind,
            holdout_error=err,
        )

    @app.post("/assistant/train", response_model=AssistantTrainResponse)
    async def train_assistant_endpoint(req: ConfigRequest):
        run = ExperimentRun(_config_of(req))
        model = run.assistant()
        return AssistantTrainResponse(
            checkpoint=base64.b64encode(save_assistant(model)).decode("ascii"),
            head=model.head,
            history=[float(v) for v in model.history],
            best_epoch=model.best_epoch,
        )

    @app.post("/grid/precompute", response_model=PrecomputeResponse)
    async def precompute_endpoint(req: PrecomputeRequest):
        config = _config_of(req)
        run = ExperimentRun(config)
        if req.materialize:
            train, _ = run.split()
            cache = precompute_grid(
                train,
                run.grid(),
                config.rate_bpp,
                derive_seed(config.seed, "cache"),
                detector=run.detector("A"),
                materialize_dir=Path(config.output_dir) / "cache",
            )
        else:
            cache = run.training_cache()
        return PrecomputeResponse(
            manifest_csv=cache_to_csv(cache),
            cell_count=cache.grid.cell_count,
            cover_count=len(cache.entries),
            bytes_used=cache.bytes_used,
            per_cell_bytes=cache.per_cell_bytes,
            materialized=cache.materialized,
        )

    @app.post("/experiments/baseline", response_model=FragmentPayload)
    async def baseline_endpoint(req: ConfigRequest):
        return _fragment_payload(ExperimentRun(_config_of(req)).baseline())

    @app.post("/experiments/assisted", response_model=FragmentPayload)
    async def assisted_endpoint(req: AssistedRequest):
        return _fragment_payload(ExperimentRun(_config_of(req)).assisted(req.mode))

    @app.post("/experiments/cross-detector", response_model=FragmentPayload)
    async def cross_endpoint(req: ConfigRequest):
        return _fragment_payload(ExperimentRun(_config_of(req)).cross_detector())

    @app.post("/experiments/transfer", response_model=FragmentPayload)
    async def transfer_endpoint(req: TransferRequest):
        return _fragment_payload(ExperimentRun(_config_of(req)).transfer(req.alt_dataset))

    @app.post("/experiments/compare-discrete", response_model=FragmentPayload)
    async def compare_endpoint(req: ConfigRequest):
        return _fragment_payload(ExperimentRun(_config_of(req)).compare_discrete())

    @app.post("/experiments/full", response_model=FragmentListResponse)
    async def full_endpoint(req: ConfigRequest):
        frags = run_full(_config_of(req))
        return FragmentListResponse(fragments=[_fragment_payload(f) for f in frags])

    @app.post("/report", response_model=ReportResponse)
    async def report_endpoint(req: ReportRequest):
        frags = [Fragment.from_payload(p.model_dump()) for p in req.fragments]
        files = render_report(frags)
        return ReportResponse(
            files={name: base64.b64encode(blob).decode("ascii") for name, blob in files.items()}
        )

    return app


app = create_app()
