"""Experiment harness: baseline vs assisted runs, ablations, and reports.

A run resolves a dataset, trains detectors on default-triple stegos, lets the
oracle or a trained assistant pick per-cover multipliers, and emits confusion
matrices as fragments. Fragments render to markdown plus CSV/PGM artifacts.
Full-scale reference figures appear in tables as labels only; desk-scale runs
are directional and never asserted against them. Timings stay out of the CSVs
so identical configs produce byte-identical CSV files.
"""

from __future__ import annotations

import base64
import dataclasses
import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assistant import (
    DEFAULT_CELL,
    GRID_VALUES,
    GridSpec,
    cache_to_csv,
    histogram_to_csv,
    multiplier_histogram,
    oracle_select,
    precompute_grid,
    predict_params,
    save_assistant,
    storage_projection,
    train_assistant,
)
from .costs import DEFAULT_TRIPLE
from .detectors import (
    DETECTOR_KINDS,
    ConfusionMatrix,
    confusion_to_csv,
    error_rate,
    evaluate,
    save_detector,
    train_detector,
)
from .embedding import LOG2_3, amplify_diff, embed
from .media import Image8, pgm_size_bytes, read_manifest, load_entry, synth_cover, write_pgm
from .nnet import TrainConfig
from .rng import derive_seed, generator

AXES = ("sigma", "epsilon", "wetcost")
ASSISTED_MODES = ("oracle", "trained-assistant")

# Full-scale reference figures quoted in report tables for orientation.
REFERENCE_LINES = {
    "baseline": "full-scale reference: 28.2% detector error",
    "assisted": "full-scale reference: 36.3% (+8.1 points over baseline)",
    "cross-detector": "full-scale reference: 37.2% under the unfamiliar detector",
    "transfer": "full-scale reference: 46.0% baseline -> 49.1% assisted, out of distribution",
    "compare-discrete": (
        "full-scale reference: continuous 704 MB, 3796s +/- 20s per epoch, 37.2% error; "
        "discrete 2.8 TB, 723s +/- 130s per epoch, 18.1% error"
    ),
    "ablation": "full-scale reference: 37.2% with all three axes vs 15.5% with sigma only",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, fully seeded description of one run; every field is overridable."""

    dataset: str = "synth:200"
    alt_dataset: str = "synth:60:4.0"
    image_size: int = 64
    smoothness: float = 2.0
    rate_bpp: float = 0.4
    split_ratio: float = 0.5
    detector_kind: str = "residual_features"
    detector_epochs: int = 40
    detector_learning_rate: float = 1e-3
    detector_batch_size: int = 16
    assistant_head: str = "continuous"
    assistant_epochs: int = 6
    assistant_learning_rate: float = 1e-3
    assistant_batch_size: int = 8
    assisted_mode: str = "oracle"
    grid_stride: int = 2
    ablation: str = "sigma,epsilon,wetcost"
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if not 0.0 < self.rate_bpp <= LOG2_3:
            raise ValueError(f"rate_bpp {self.rate_bpp} outside (0, log2 3]")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio {self.split_ratio} outside (0, 1)")
        if self.image_size < 8:
            raise ValueError(f"image_size must be >= 8, got {self.image_size}")
        if self.detector_kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector_kind {self.detector_kind!r}")
        if self.assistant_head not in ("continuous", "discrete"):
            raise ValueError(f"unknown assistant_head {self.assistant_head!r}")
        if self.assisted_mode not in ASSISTED_MODES:
            raise ValueError(f"unknown assisted_mode {self.assisted_mode!r}")
        if self.grid_stride < 1:
            raise ValueError(f"grid_stride must be >= 1, got {self.grid_stride}")
        axes = self.ablation_axes()
        if not axes:
            raise ValueError("ablation mask must keep at least one axis")
        unknown = axes - set(AXES)
        if unknown:
            raise ValueError(f"unknown ablation axes {sorted(unknown)}")

    def ablation_axes(self) -> set:
        return {a.strip() for a in self.ablation.split(",") if a.strip()}

    def echo_lines(self) -> list:
        return [f"{f.name}={getattr(self, f.name)}" for f in dataclasses.fields(self)]

    def detector_config(self, role: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.detector_learning_rate,
            epochs=self.detector_epochs,
            batch_size=self.detector_batch_size,
            seed=derive_seed(self.seed, "det", role),
        )

    def assistant_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.assistant_learning_rate,
            epochs=self.assistant_epochs,
            batch_size=self.assistant_batch_size,
            seed=derive_seed(self.seed, "assistant"),
        )


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Flat key=value lines; '#' comments and blanks ignored; overrides win."""
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        data[key.strip()] = value.strip()
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = str(value)
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, raw in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        kind = type(known[key].default)
        try:
            kwargs[key] = kind(raw)
        except ValueError:
            raise ValueError(f"config key {key!r} expects {kind.__name__}, got {raw!r}") from None
    return ExperimentConfig(**kwargs)


def resolve_dataset(
    spec: str, image_size: int, smoothness: float, seed: int, id_prefix: str = "synth-"
) -> list:
    """(cover id, image) pairs from `synth:N[:smoothness]` or a manifest path."""
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad synthetic dataset spec {spec!r}")
        count = int(parts[1])
        if count < 1:
            raise ValueError(f"dataset needs at least 1 cover, got {count}")
        smooth = float(parts[2]) if len(parts) == 3 else smoothness
        return [
            (
                f"{id_prefix}{i:04d}",
                synth_cover(derive_seed(seed, "cover", id_prefix, i), image_size, image_size, smooth),
            )
            for i in range(count)
        ]
    manifest = read_manifest(Path(spec).read_text(encoding="utf-8"))
    return [
        (entry.identifier, load_entry(entry, image_size, image_size, smoothness))
        for entry in manifest.entries
    ]


@dataclass
class Fragment:
    """One phase's results: JSON-able data plus files to materialize."""

    name: str
    data: dict
    csv_files: dict = field(default_factory=dict)
    pgm_files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "data": self.data,
            "csv_files": self.csv_files,
            "pgm_files": {
                k: base64.b64encode(v).decode("ascii") for k, v in self.pgm_files.items()
            },
            "timings": self.timings,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Fragment":
        return cls(
            payload["name"],
            payload["data"],
            dict(payload.get("csv_files", {})),
            {k: base64.b64decode(v) for k, v in payload.get("pgm_files", {}).items()},
            dict(payload.get("timings", {})),
        )


def _cm_dict(cm: ConfusionMatrix) -> dict:
    return {
        "cover_as_cover": cm.cover_as_cover,
        "cover_as_stego": cm.cover_as_stego,
        "stego_as_cover": cm.stego_as_cover,
        "stego_as_stego": cm.stego_as_stego,
    }


def _points(assisted: float, baseline: float) -> float:
    return 100.0 * (assisted - baseline)


class ExperimentRun:
    """Deterministic phase pipeline over one config; phases memoize."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._memo = {}

    def _get(self, key, build):
        if key not in self._memo:
            self._memo[key] = build()
        return self._memo[key]

    # dataset plumbing

    def covers(self) -> list:
        c = self.config
        return self._get(
            "covers", lambda: resolve_dataset(c.dataset, c.image_size, c.smoothness, c.seed)
        )

    def split(self) -> tuple:
        def build():
            covers = self.covers()
            if len(covers) < 2:
                raise ValueError("need at least 2 covers to split")
            perm = generator(derive_seed(self.config.seed, "split")).permutation(len(covers))
            n_train = int(math.floor(self.config.split_ratio * len(covers) + 0.5))
            n_train = max(1, min(len(covers) - 1, n_train))
            train = [covers[i] for i in perm[:n_train]]
            held = [covers[i] for i in perm[n_train:]]
            return train, held

        return self._get("split", build)

    def cover_seed(self, cover_id: str) -> int:
        return derive_seed(self.config.seed, "embed", cover_id)

    def default_stego(self, cover_id: str, cover: Image8) -> Image8:
        # same derivation the oracle uses for its default arm, so the
        # baseline and the oracle's default candidate are pixel-identical
        def build():
            seed = derive_seed(self.cover_seed(cover_id), "default")
            return embed(cover, DEFAULT_TRIPLE, self.config.rate_bpp, seed).pixels

        return self._get(("default", cover_id), build)

    def default_pairs(self, covers: list) -> list:
        return [(img, self.default_stego(cid, img)) for cid, img in covers]

    # models

    def detector(self, role: str = "A"):
        def build():
            train, _ = self.split()
            return train_detector(
                self.default_pairs(train),
                self.config.detector_kind,
                self.config.detector_config(role),
            )

        return self._get(("detector", role), build)

    def grid(self) -> GridSpec:
        def build():
            values = GRID_VALUES[:: self.config.grid_stride]
            axes = self.config.ablation_axes()
            picked = [values if a in axes else (1.0,) for a in AXES]
            return GridSpec(*picked)

        return self._get("grid", build)

    def training_cache(self):
        def build():
            train, _ = self.split()
            return precompute_grid(
                train,
                self.grid(),
                self.config.rate_bpp,
                derive_seed(self.config.seed, "cache"),
                detector=self.detector("A"),
            )

        return self._get("training_cache", build)

    def assistant(self):
        def build():
            train, _ = self.split()
            return train_assistant(
                train,
                self.detector("A"),
                self.grid(),
                self.config.assistant_head,
                self.config.assistant_config(),
                rate_bpp=self.config.rate_bpp,
                cache=self.training_cache(),
            )

        return self._get("assistant", build)

    # per-cover assisted embedding

    def _oracle_stego(self, cover_id: str, cover: Image8):
        seed = self.cover_seed(cover_id)
        choice = oracle_select(cover, self.detector("A"), self.grid(), self.config.rate_bpp, seed)
        arm = "default" if choice.cell_index == DEFAULT_CELL else choice.cell_index
        stego = embed(cover, choice.params, self.config.rate_bpp, derive_seed(seed, arm))
        return stego.pixels, choice

    def _assistant_stego(self, cover_id: str, cover: Image8):
        params = predict_params(self.assistant(), cover)
        seed = derive_seed(self.cover_seed(cover_id), "assist")
        return embed(cover, params, self.config.rate_bpp, seed).pixels, params

    def assisted_pairs(self, covers: list, mode: str) -> tuple:
        """(pairs, per-cover detail) under the chosen selection mode."""
        if mode not in ASSISTED_MODES:
            raise ValueError(f"unknown assisted mode {mode!r}")
        pairs = []
        detail = []
        for cover_id, cover in covers:
            if mode == "oracle":
                stego, choice = self._oracle_stego(cover_id, cover)
                detail.append(
                    {
                        "cover_id": cover_id,
                        "cell_index": choice.cell_index,
                        "params": list(choice.params.as_tuple()),
                        "oracle_score": choice.score,
                        "default_score": choice.default_score,
                    }
                )
            else:
                stego, params = self._assistant_stego(cover_id, cover)
                detail.append({"cover_id": cover_id, "params": list(params.as_tuple())})
            pairs.append((cover, stego))
        return pairs, detail

    # fragments

    def baseline(self) -> Fragment:
        t0 = time.perf_counter()
        _, held = self.split()
        cm = evaluate(self.detector("A"), self.default_pairs(held))
        first_id, first_cover = held[0]
        diff = amplify_diff(first_cover, self.default_stego(first_id, first_cover), 8)
        return Fragment(
            "baseline",
            {
                "config": self.config.echo_lines(),
                "counts": _cm_dict(cm),
                "error_rate": error_rate(cm),
                "holdout_size": len(held),
                "reference": REFERENCE_LINES["baseline"],
            },
            csv_files={"baseline_confusion.csv": confusion_to_csv(cm)},
            pgm_files={"baseline_diff.pgm": write_pgm(diff)},
            timings={"baseline": time.perf_counter() - t0},
        )


    def assisted(self, mode: str | None = None) -> Fragment:
        t0 = time.perf_counter()
        mode = mode or self.config.assisted_mode
        _, held = self.split()
        base_err = error_rate(evaluate(self.detector("A"), self.default_pairs(held)))
        pairs, detail = self.assisted_pairs(held, mode)
        cm = evaluate(self.detector("A"), pairs)
        data = {
            "config": self.config.echo_lines(),
            "mode": mode,
            "counts": _cm_dict(cm),
            "error_rate": error_rate(cm),
            "baseline_error_rate": base_err,
            "delta_points": _points(error_rate(cm), base_err),
            "selection": detail,
            "ablation_axes": sorted(self.config.ablation_axes()),
            "reference": REFERENCE_LINES["assisted"],
        }
        if sorted(self.config.ablation_axes()) != sorted(AXES):
            data["ablation_reference"] = REFERENCE_LINES["ablation"]
        csvs = {"assisted_confusion.csv": confusion_to_csv(cm)}
        pgms = {}
        if mode == "oracle":
            scores = [d["oracle_score"] for d in detail]
            defaults = [d["default_score"] for d in detail]
            data["mean_oracle_score"] = float(np.mean(scores))
            data["mean_default_score"] = float(np.mean(defaults))
        else:
            model = self.assistant()
            data["assistant_history"] = [float(v) for v in model.history]
            data["assistant_best_epoch"] = model.best_epoch
            csvs["grid_manifest.csv"] = cache_to_csv(self.training_cache())
            if model.head == "continuous":
                hists = multiplier_histogram(model, [img for _, img in held])
                for key, counts in hists.items():
                    csvs[f"histogram_{key}.csv"] = histogram_to_csv(counts)
        first_cover = held[0][1]
        diff = amplify_diff(first_cover, pairs[0][1], 8)
        pgms["assisted_diff.pgm"] = write_pgm(diff)
        return Fragment(
            "assisted",
            data,
            csv_files=csvs,
            pgm_files=pgms,
            timings={"assisted": time.perf_counter() - t0},
        )

    def cross_detector(self) -> Fragment:
        t0 = time.perf_counter()
        _, held = self.split()
        blob_a = save_detector(self.detector("A"))
        blob_b = save_detector(self.detector("B"))
        if blob_a == blob_b:
            raise ValueError("re-seeded detector reproduced identical weights")
        base_err = error_rate(evaluate(self.detector("A"), self.default_pairs(held)))
        pairs, _ = self.assisted_pairs(held, self.config.assisted_mode)
        familiar_err = error_rate(evaluate(self.detector("A"), pairs))
        cm = evaluate(self.detector("B"), pairs)
        unfamiliar_err = error_rate(cm)
        return Fragment(
            "cross-detector",
            {
                "config": self.config.echo_lines(),
                "counts": _cm_dict(cm),
                "error_rate": unfamiliar_err,
                "baseline_error_rate": base_err,
                "familiar_error_rate": familiar_err,
                "familiar_delta_points": _points(familiar_err, base_err),
                "unfamiliar_delta_points": _points(unfamiliar_err, base_err),
                "checkpoints_differ": True,
                "reference": REFERENCE_LINES["cross-detector"],
            },
            csv_files={"cross_detector_confusion.csv": confusion_to_csv(cm)},
            timings={"cross-detector": time.perf_counter() - t0},
        )

    def transfer(self, alt_dataset: str | None = None) -> Fragment:
        t0 = time.perf_counter()
        c = self.config
        spec = alt_dataset or c.alt_dataset
        alt = resolve_dataset(spec, c.image_size, c.smoothness, c.seed, id_prefix="alt-")
        detector = self.detector("B")
        hashes = [hashlib.sha256(save_detector(detector)).hexdigest()]
        if c.assisted_mode == "trained-assistant":
            hashes.append(hashlib.sha256(save_assistant(self.assistant())).hexdigest())
        base_cm = evaluate(detector, self.default_pairs(alt))
        pairs, _ = self.assisted_pairs(alt, c.assisted_mode)
        cm = evaluate(detector, pairs)
        after = [hashlib.sha256(save_detector(detector)).hexdigest()]
        if c.assisted_mode == "trained-assistant":
            after.append(hashlib.sha256(save_assistant(self.assistant())).hexdigest())
        if hashes != after:
            raise ValueError("evaluation modified a model checkpoint")
        return Fragment(
            "transfer",
            {
                "config": self.config.echo_lines(),
                "alt_dataset": spec,
                "out_of_distribution": True,
                "baseline_counts": _cm_dict(base_cm),
                "baseline_error_rate": error_rate(base_cm),
                "counts": _cm_dict(cm),
                "error_rate": error_rate(cm),
                "delta_points": _points(error_rate(cm), error_rate(base_cm)),
                "checkpoints_unchanged": True,
                "reference": REFERENCE_LINES["transfer"],
            },
            csv_files={
                "transfer_baseline_confusion.csv": confusion_to_csv(base_cm),
                "transfer_assisted_confusion.csv": confusion_to_csv(cm),
            },
            timings={"transfer": time.perf_counter() - t0},
        )

    def compare_discrete(self) -> Fragment:
        t0 = time.perf_counter()
        c = self.config
        if c.assistant_epochs < 3:
            raise ValueError("per-epoch mean/std needs assistant_epochs >= 3")
        train, _ = self.split()
        cache_dir = Path(c.output_dir) / "cache"
        cache = precompute_grid(
            train,
            self.grid(),
            c.rate_bpp,
            derive_seed(c.seed, "cache"),
            detector=self.detector("A"),
            materialize_dir=cache_dir,
        )
        covers_bytes = sum(pgm_size_bytes(img.width, img.height) for _, img in train)
        rows = {}
        for head in ("continuous", "discrete"):
            model = train_assistant(
                train, self.detector("A"), self.grid(), head,
                c.assistant_config(), rate_bpp=c.rate_bpp, cache=cache,
            )
            storage = covers_bytes + (cache.bytes_used if head == "discrete" else 0)
            rows[head] = {
                "storage_bytes": storage,
                "mean_epoch_seconds": float(np.mean(model.epoch_seconds)),
                "std_epoch_seconds": float(np.std(model.epoch_seconds)),
                "validation_error_rate": max(model.history),
            }
        lines = ["head,storage_bytes,validation_error_rate"]
        for head in ("continuous", "discrete"):
            r = rows[head]
            lines.append(f"{head},{r['storage_bytes']},{r['validation_error_rate']:.6f}")
        projection = storage_projection(10_000, 2197, 256, 256)
        return Fragment(
            "compare-discrete",
            {
                "config": self.config.echo_lines(),
                "rows": rows,
                "cache_bytes": cache.bytes_used,
                "per_cell_bytes": cache.per_cell_bytes,
                "full_scale_projection_bytes": projection,
                "projection_note": (
                    f"materializing 10,000 covers x 2197 cells at 256x256 takes exactly "
                    f"{projection} bytes ({projection / 2**40:.2f} TiB); the full-scale "
                    "reference reports 2.8 TB for the same sweep"
                ),
                "reference": REFERENCE_LINES["compare-discrete"],
            },
            csv_files={"compare_discrete.csv": "\n".join(lines) + "\n"},
            timings={
                "compare-discrete": time.perf_counter() - t0,
                "continuous_epoch_mean": rows["continuous"]["mean_epoch_seconds"],
                "discrete_epoch_mean": rows["discrete"]["mean_epoch_seconds"],
            },
        )


def run_baseline(config: ExperimentConfig) -> Fragment:
    return ExperimentRun(config).baseline()


def run_assisted(config: ExperimentConfig, mode: str | None = None) -> Fragment:
    return ExperimentRun(config).assisted(mode)


def run_cross_detector(config: ExperimentConfig) -> Fragment:
    return ExperimentRun(config).cross_detector()


def run_transfer(config: ExperimentConfig, alt_dataset: str | None = None) -> Fragment:
    return ExperimentRun(config).transfer(alt_dataset)


def run_discrete_comparison(config: ExperimentConfig) -> Fragment:
    return ExperimentRun(config).compare_discrete()


def run_full(config: ExperimentConfig) -> list:
    """All five phases on one shared pipeline (models trained once)."""
    run = ExperimentRun(config)
    return [
        run.baseline(),
        run.assisted(),
        run.cross_detector(),
        run.transfer(),
        run.compare_discrete(),
    ]


def _render_counts_table(counts: dict) -> list:
    total = sum(counts.values())
    if total == 0:
        raise ValueError("empty confusion matrix")

    def cell(key):
        return f"{100.0 * counts[key] / total:.1f}% ({counts[key]})"

    return [
        "| | cover class | stego class |",
        "| --- | --- | --- |",
        f"| cover image | {cell('cover_as_cover')} | {cell('cover_as_stego')} |",
        f"| stego image | {cell('stego_as_cover')} | {cell('stego_as_stego')} |",
    ]


def _render_fragment(f: Fragment) -> list:
    lines = [f"## {f.name}", ""]
    if "counts" in f.data:
        lines += _render_counts_table(f.data["counts"])
        lines.append(f"| error rate | {100.0 * f.data['error_rate']:.1f}% | |")
        lines.append("")
    if "baseline_counts" in f.data:
        lines.append("baseline on the same covers:")
        lines.append("")
        lines += _render_counts_table(f.data["baseline_counts"])
        lines.append(f"| error rate | {100.0 * f.data['baseline_error_rate']:.1f}% | |")
        lines.append("")
    for key in (
        "mode",
        "delta_points",
        "familiar_delta_points",
        "unfamiliar_delta_points",
        "mean_oracle_score",
        "mean_default_score",
        "alt_dataset",
        "out_of_distribution",
        "ablation_axes",
        "projection_note",
    ):
        if key in f.data:
            value = f.data[key]
            if isinstance(value, float):
                value = f"{value:+.1f}" if key.endswith("points") else f"{value:.4f}"
            lines.append(f"- {key}: {value}")
    if "rows" in f.data:
        lines.append("")
        lines.append("| head | storage bytes | epoch seconds (mean +/- std) | validation error |")
        lines.append("| --- | --- | --- | --- |")
        for head, r in f.data["rows"].items():
            lines.append(
                f"| {head} | {r['storage_bytes']} | "
                f"{r['mean_epoch_seconds']:.3f} +/- {r['std_epoch_seconds']:.3f} | "
                f"{100.0 * r['validation_error_rate']:.1f}% |"
            )
    if "reference" in f.data:
        lines.append(f"- {f.data['reference']}")
    if "ablation_reference" in f.data:
        lines.append(f"- {f.data['ablation_reference']}")
    if f.csv_files or f.pgm_files:
        names = sorted(f.csv_files) + sorted(f.pgm_files)
        lines.append(f"- files: {', '.join(names)}")
    lines.append("")
    return lines


def render_report(fragments: list) -> dict:
    """Filename -> bytes for the whole report; raises on empty input."""
    if not fragments:
        raise ValueError("no fragments to report")
    lines = ["# Steganography workbench report", ""]
    echo = next((f.data["config"] for f in fragments if "config" in f.data), None)
    if echo:
        lines += ["## Configuration", "", "```"]
        lines += list(echo)
        lines += ["```", ""]
    files = {}
    timing_lines = []
    for f in fragments:
        lines += _render_fragment(f)
        for name, text in f.csv_files.items():
            files[name] = text.encode("utf-8")
        for name, blob in f.pgm_files.items():
            files[name] = blob
        for phase, seconds in f.timings.items():
            timing_lines.append(f"{f.name}/{phase}={seconds:.6f}")
    files["report.md"] = "\n".join(lines).encode("utf-8")
    files["timings.txt"] = ("\n".join(timing_lines) + "\n").encode("utf-8")
    return files


def emit_report(fragments: list, out_dir) -> list:
    """Write the rendered report; returns the paths, sorted."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, blob in render_report(fragments).items():
        path = out / name
        path.write_bytes(blob)
        paths.append(path)
    return sorted(paths)
