"""Thin command-line client over the workbench service.

Every subcommand is one or two HTTP requests. Without --server the requests
run in process against the ASGI app, so local use needs no daemon yet still
exercises the exact deployed code path. Experiment subcommands accept a flat
key=value config file, and every config key doubles as a flag of the same
name; flags win.
"""

import argparse
import asyncio
import base64
import dataclasses
import sys
from pathlib import Path

import httpx

from .experiments import ExperimentConfig, parse_config

REQUEST_TIMEOUT = 600.0


class ServiceClient:
    """Sync facade over a remote server or the in-process ASGI app."""

    def __init__(self, server: str | None = None):
        self.server = server

    def get(self, path: str) -> dict:
        return self._request("GET", path, None)

    def post(self, path: str, payload: dict) -> dict:
        return self._request("POST", path, payload)

    def _request(self, method: str, path: str, payload: dict | None) -> dict:
        if self.server is None:
            return asyncio.run(self._in_process(method, path, payload))
        with httpx.Client(base_url=self.server, timeout=REQUEST_TIMEOUT) as client:
            return self._finish(client.request(method, path, json=payload))

    async def _in_process(self, method: str, path: str, payload: dict | None) -> dict:
        from .service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://stegbench", timeout=REQUEST_TIMEOUT
        ) as client:
            return self._finish(await client.request(method, path, json=payload))

    @staticmethod
    def _finish(response: httpx.Response) -> dict:
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise SystemExit(f"error: {detail}")
        return response.json()


def _add_triple_args(p: argparse.ArgumentParser):
    p.add_argument("--sigma-mult", type=float, default=1.0)
    p.add_argument("--epsilon-mult", type=float, default=1.0)
    p.add_argument("--wetcost-mult", type=float, default=1.0)


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    for f in dataclasses.fields(ExperimentConfig):
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        p.add_argument(*names, dest=f.name, default=None, help=f"override (default {f.default})")


def _config_payload(args) -> tuple[ExperimentConfig, dict]:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name)
        if value is not None:
            overrides[f.name] = value
    # validate client-side before shipping the request
    config = parse_config(text, overrides)
    return config, {"config_text": text, "overrides": overrides}


def _write_files(files: dict, out_dir: str) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(files):
        path = out / name
        path.write_bytes(base64.b64decode(files[name]))
        paths.append(path)
    return paths


def _summarize(frag: dict) -> str:
    data = frag["data"]
    bits = []
    if "baseline_error_rate" in data:
        bits.append(f"baseline error {100.0 * data['baseline_error_rate']:.1f}%")
    if "error_rate" in data:
        bits.append(f"error rate {100.0 * data['error_rate']:.1f}%")
    if "delta_points" in data:
        bits.append(f"{data['delta_points']:+.1f} points")
    for head, row in data.get("rows", {}).items():
        bits.append(
            f"{head}: {row['storage_bytes']} bytes, "
            f"{100.0 * row['validation_error_rate']:.1f}% validation error"
        )
    joined = ", ".join(bits) if bits else "done"
    return f"{frag['name']}: {joined}"


def _emit_fragments(client: ServiceClient, fragments: list, out_dir: str):
    rendered = client.post("/report", {"fragments": fragments})
    paths = _write_files(rendered["files"], out_dir)
    for frag in fragments:
        print(_summarize(frag))
    print(f"wrote {len(paths)} files under {out_dir}")


def _cmd_embed(args, client: ServiceClient):
    payload = {
        "cover_pgm": base64.b64encode(Path(args.cover).read_bytes()).decode("ascii"),
        "rate_bpp": args.rate_bpp,
        "seed": args.seed,
        "sigma_mult": args.sigma_mult,
        "epsilon_mult": args.epsilon_mult,
        "wetcost_mult": args.wetcost_mult,
    }
    body = client.post("/embed", payload)
    Path(args.out).write_bytes(base64.b64decode(body["stego_pgm"]))
    if args.sidecar:
        Path(args.sidecar).write_text(body["sidecar"], encoding="utf-8")
    else:
        print(body["sidecar"], end="")
    print(f"wrote {args.out} ({body['change_count']} changed pixels)")


def _cmd_cost_map(args, client: ServiceClient):
    payload = {
        "cover_pgm": base64.b64encode(Path(args.cover).read_bytes()).decode("ascii"),
        "sigma_mult": args.sigma_mult,
        "epsilon_mult": args.epsilon_mult,
        "wetcost_mult": args.wetcost_mult,
    }
    body = client.post("/cost-map", payload)
    Path(args.out).write_bytes(base64.b64decode(body["cost_blob"]))
    print(
        f"wrote {args.out} (contrast {body['contrast']:.4f}, "
        f"wet +{body['wet_plus']} -{body['wet_minus']})"
    )


def _cmd_train_detector(args, client: ServiceClient):
    config, payload = _config_payload(args)
    body = client.post("/detector/train", payload)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "detector.ckpt"
    path.write_bytes(base64.b64decode(body["checkpoint"]))
    print(f"wrote {path} ({body['kind']}, holdout error {100.0 * body['holdout_error']:.1f}%)")


def _cmd_train_assistant(args, client: ServiceClient):
    config, payload = _config_payload(args)
    body = client.post("/assistant/train", payload)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "assistant.ckpt"
    path.write_bytes(base64.b64decode(body["checkpoint"]))
    history = body["history"]
    print(
        f"wrote {path} ({body['head']} head, best epoch {body['best_epoch']}, "
        f"validation detector-error {100.0 * history[body['best_epoch']]:.1f}%)"
    )


def _cmd_precompute_grid(args, client: ServiceClient):
    config, payload = _config_payload(args)
    payload["materialize"] = args.materialize
    body = client.post("/grid/precompute", payload)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "grid_manifest.csv"
    path.write_text(body["manifest_csv"], encoding="utf-8")
    stored = f"{body['bytes_used']} bytes" if body["materialized"] else "lazy, seeds only"
    print(
        f"wrote {path} ({body['cover_count']} covers x {body['cell_count']} cells "
        f"+ default arm, {stored})"
    )


def _make_experiment_cmd(endpoint: str):
    def handler(args, client: ServiceClient):
        config, payload = _config_payload(args)
        frag = client.post(f"/experiments/{endpoint}", payload)
        _emit_fragments(client, [frag], config.output_dir)

    return handler


def _cmd_report(args, client: ServiceClient):
    config, payload = _config_payload(args)
    body = client.post("/experiments/full", payload)
    _emit_fragments(client, body["fragments"], config.output_dir)


def _cmd_serve(args, client: ServiceClient):
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stegbench",
        description="steganography workbench: parametric embedding, detectors, experiments",
    )
    parser.add_argument("--server", help="service URL; omit to run in process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a payload into one PGM cover")
    p.add_argument("--cover", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate-bpp", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sidecar", help="write the parameter sidecar line here instead of stdout")
    _add_triple_args(p)
    p.set_defaults(handler=_cmd_embed)

    p = sub.add_parser("cost-map", help="dump the ternary cost map for one cover")
    p.add_argument("--cover", required=True)
    p.add_argument("--out", required=True)
    _add_triple_args(p)
    p.set_defaults(handler=_cmd_cost_map)

    p = sub.add_parser("train-detector", help="train the familiar detector on default stegos")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_train_detector)

    p = sub.add_parser("train-assistant", help="train the parameter assistant against detector A")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_train_assistant)

    p = sub.add_parser("precompute-grid", help="score the parameter grid over the train split")
    _add_config_args(p)
    p.add_argument("--materialize", action="store_true", help="write stego artifacts to disk")
    p.set_defaults(handler=_cmd_precompute_grid)

    experiment_helps = {
        "baseline": "default-triple confusion matrix on the holdout",
        "assisted": "per-cover parameter selection vs the baseline",
        "cross-detector": "assisted stegos against a re-seeded detector",
        "transfer": "frozen models on an out-of-distribution dataset",
        "compare-discrete": "continuous vs discrete head cost and accuracy",
    }
    for endpoint, text in experiment_helps.items():
        p = sub.add_parser(endpoint, help=text)
        _add_config_args(p)
        p.set_defaults(handler=_make_experiment_cmd(endpoint))

    p = sub.add_parser("report", help="run every phase and render the full report")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    client = ServiceClient(args.server)
    try:
        args.handler(args, client)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}") from exc
    except OSError as exc:
        raise SystemExit(f"error: {exc}") from exc
    return 0


if __name__ == "__main__":
    sys.exit(main())
