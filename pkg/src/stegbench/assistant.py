"""Parameter-selection assistant.

A small CNN proposes cost-function multipliers per cover, either as three
positive reals (continuous head) or as one cell of a fixed multiplier grid
(discrete head). Supervision comes from an exhaustive grid oracle scored by a
frozen detector; the grid sweep can be cached to disk with exact storage
accounting, or kept lazy as (seed, cell) records that regenerate bit-exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .costs import DEFAULT_TRIPLE, ParameterTriple, finalize_cost_map, rho_unwetted
from .detectors import DetectorModel, predict_batch
from .embedding import StegoImage, embed, round_probs, simulate_embedding, solve_lambda
from .media import Image8, pgm_size_bytes, write_pgm
from .nnet import (
    BatchNorm,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Network,
    ReLU,
    Softmax,
    Softplus,
    TrainConfig,
    AdamState,
    adam_step,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
    smooth_l1,
)
from .rng import derive_seed, generator

# 13 multiplier values shared by all three axes; 13^3 = 2197 cells.
GRID_VALUES = (
    1.3, 1.325, 1.35, 1.3625, 1.375, 1.3875, 1.4,
    1.4125, 1.425, 1.4375, 1.45, 1.475, 1.5,
)

DEFAULT_CELL = -1  # manifest row index reserved for the (1, 1, 1) arm

ASSISTANT_HEADS = ("continuous", "discrete")

CACHE_HEADER = "cover_id,cell_index,sigma,epsilon,wetcost,seed,detector_score,artifact_path"
HISTOGRAM_HEADER = "bin_left,bin_right,count"

# 80 bins of width 0.0125 spanning the multiplier range of interest
HISTOGRAM_EDGES = np.linspace(1.0, 2.0, 81)


@dataclass(frozen=True)
class GridSpec:
    """Three strictly increasing axes of positive multiplier values."""

    sigma_values: tuple = GRID_VALUES
    epsilon_values: tuple = GRID_VALUES
    wetcost_values: tuple = GRID_VALUES

    def __post_init__(self):
        for name in ("sigma_values", "epsilon_values", "wetcost_values"):
            axis = tuple(float(v) for v in getattr(self, name))
            if not axis:
                raise ValueError(f"{name} must not be empty")
            if any(not v > 0 for v in axis):
                raise ValueError(f"{name} must be positive, got {axis}")
            if any(a >= b for a, b in zip(axis, axis[1:])):
                raise ValueError(f"{name} must be strictly increasing, got {axis}")
            object.__setattr__(self, name, axis)

    @property
    def cell_count(self) -> int:
        return len(self.sigma_values) * len(self.epsilon_values) * len(self.wetcost_values)

    def cell_of(self, i_sigma: int, i_epsilon: int, i_wetcost: int) -> int:
        n_e, n_w = len(self.epsilon_values), len(self.wetcost_values)
        return (i_sigma * n_e + i_epsilon) * n_w + i_wetcost

    def triple_at(self, cell_index: int) -> ParameterTriple:
        if not 0 <= cell_index < self.cell_count:
            raise ValueError(f"cell index {cell_index} outside [0, {self.cell_count})")
        n_e, n_w = len(self.epsilon_values), len(self.wetcost_values)
        rest, i_w = divmod(cell_index, n_w)
        i_s, i_e = divmod(rest, n_e)
        return ParameterTriple(
            self.sigma_values[i_s], self.epsilon_values[i_e], self.wetcost_values[i_w]
        )

    def axes(self) -> dict:
        return {
            "sigma": list(self.sigma_values),
            "epsilon": list(self.epsilon_values),
            "wetcost": list(self.wetcost_values),
        }


def default_grid() -> GridSpec:
    return GridSpec()


def thinned_grid(stride: int = 2) -> GridSpec:
    """Every stride-th default value on each axis; stride 2 keeps 7 of 13."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    axis = GRID_VALUES[::stride]
    return GridSpec(axis, axis, axis)


def single_axis_grid(axis: str, values=GRID_VALUES) -> GridSpec:
    """Sweep one multiplier; pin the other two at 1.0 for ablation runs."""
    pinned = (1.0,)
    if axis == "sigma":
        return GridSpec(values, pinned, pinned)
    if axis == "epsilon":
        return GridSpec(pinned, values, pinned)
    if axis == "wetcost":
        return GridSpec(pinned, pinned, values)
    raise ValueError(f"unknown axis {axis!r}")


@dataclass(frozen=True)
class CacheEntry:
    """One embedding arm: a grid cell, or the default triple at cell -1."""

    cover_id: str
    cell_index: int
    params: ParameterTriple
    seed: int
    detector_score: float | None = None
    artifact_path: str | None = None


@dataclass
class GridCache:
    grid: GridSpec
    rate_bpp: float
    materialized: bool
    entries: dict = field(default_factory=dict)  # cover_id -> {cell_index: CacheEntry}
    per_cell_bytes: int = 0
    bytes_used: int = 0

    def covers(self) -> list:
        return list(self.entries)

    def entry(self, cover_id: str, cell_index: int) -> CacheEntry:
        rows = self.entries.get(cover_id)
        if rows is None or cell_index not in rows:
            raise ValueError(f"no cache row for cover {cover_id!r} cell {cell_index}")
        return rows[cell_index]

    def best_cell(self, cover_id: str) -> CacheEntry:
        """Lowest-score grid cell (default arm excluded); ties keep the lowest index."""
        best = None
        for cell_index in sorted(self.entries.get(cover_id, {})):
            if cell_index == DEFAULT_CELL:
                continue
            row = self.entries[cover_id][cell_index]
            if row.detector_score is None:
                raise ValueError(f"cache row {cover_id!r}/{cell_index} has no detector score")
            if best is None or row.detector_score < best.detector_score:
                best = row
        if best is None:
            raise ValueError(f"missing oracle labels for cover {cover_id!r}")
        return best

    def regenerate(self, cover: Image8, cover_id: str, cell_index: int) -> StegoImage:
        row = self.entry(cover_id, cell_index)
        return embed(cover, row.params, self.rate_bpp, row.seed)


def storage_projection(n_covers: int, n_cells: int, width: int, height: int) -> int:
    """Exact bytes to materialize every arm as an 8-bit binary graymap."""
    return n_covers * n_cells * pgm_size_bytes(width, height)


def _grid_stegos(cover: Image8, grid: GridSpec, rate_bpp: float, cover_seed: int):
    """All grid-cell embeddings for one cover, ordered by cell index.

    Shares one wavelet pass per sigma value and one payload calibration per
    (sigma, wetcost) pair; epsilon only moves the snap threshold. The result
    is bit-identical to calling embed() per cell.
    """
    payload = rate_bpp * cover.size
    rows = []
    for i_s, sigma in enumerate(grid.sigma_values):
        rho = rho_unwetted(cover, sigma)
        for i_w, wet in enumerate(grid.wetcost_values):
            calibrated = solve_lambda(finalize_cost_map(cover, rho, wet), payload)
            for i_e, eps in enumerate(grid.epsilon_values):
                cell = grid.cell_of(i_s, i_e, i_w)
                triple = ParameterTriple(sigma, eps, wet)
                seed = derive_seed(cover_seed, cell)
                stego = simulate_embedding(cover, round_probs(calibrated, eps), seed, triple)
                rows.append((cell, triple, seed, stego))
    rows.sort(key=lambda row: row[0])
    return rows


def _default_arm(cover: Image8, rate_bpp: float, cover_seed: int) -> StegoImage:
    return embed(cover, DEFAULT_TRIPLE, rate_bpp, derive_seed(cover_seed, "default"))


def _artifact_name(cover_id: str, cell_index: int) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in cover_id)
    return f"{safe}_cell{cell_index}.pgm"


def precompute_grid(
    covers: Sequence[tuple],
    grid: GridSpec,
    rate_bpp: float,
    seed: int,
    detector: DetectorModel | None = None,
    materialize_dir=None,
    budget_bytes: int | None = None,
) -> GridCache:
    """Embed every cover under every grid cell plus the default triple.

    Lazy mode (no directory) records only (parameters, seed, score); artifacts
    regenerate bit-exactly on demand. Materialized mode writes one graymap per
    arm and refuses up front when the exact projection exceeds budget_bytes.
    """
    covers = list(covers)
    if not covers:
        raise ValueError("no covers to precompute")
    for cover_id, _ in covers:
        if "," in cover_id or "\n" in cover_id:
            raise ValueError(f"cover id {cover_id!r} cannot carry ',' or newline")
    first = covers[0][1]
    per_cell = pgm_size_bytes(first.width, first.height)
    arms = grid.cell_count + 1
    projection = storage_projection(len(covers), arms, first.width, first.height)
    materialized = materialize_dir is not None
    if materialized:
        if budget_bytes is not None and projection > budget_bytes:
            raise ValueError(
                f"materializing {len(covers)} covers x {arms} arms needs "
                f"{projection} bytes, over the {budget_bytes} byte budget; "
                "use lazy mode (no materialize_dir) to store seeds only"
            )
        materialize_dir = Path(materialize_dir)
        materialize_dir.mkdir(parents=True, exist_ok=True)

    cache = GridCache(grid, rate_bpp, materialized, per_cell_bytes=per_cell)
    for cover_id, cover in covers:
        cover_seed = derive_seed(seed, cover_id)
        rows = _grid_stegos(cover, grid, rate_bpp, cover_seed)
        arms_here = [(DEFAULT_CELL, DEFAULT_TRIPLE, derive_seed(cover_seed, "default"),
                      _default_arm(cover, rate_bpp, cover_seed))]
        arms_here += rows
        scores = [None] * len(arms_here)
        if detector is not None:
            scores = predict_batch(detector, [st.pixels for _, _, _, st in arms_here])
        table = {}
        for (cell, triple, arm_seed, stego), score in zip(arms_here, scores):
            path = None
            if materialized:
                name = _artifact_name(cover_id, cell)
                blob = write_pgm(stego.pixels)
                (materialize_dir / name).write_bytes(blob)
                cache.bytes_used += len(blob)
                path = name
            table[cell] = CacheEntry(
                cover_id, cell, triple, arm_seed,
                None if score is None else float(score), path,
            )
        cache.entries[cover_id] = table
    return cache


def cache_to_csv(cache: GridCache) -> str:
    lines = [CACHE_HEADER]
    for cover_id in cache.covers():
        for cell_index in sorted(cache.entries[cover_id]):
            row = cache.entries[cover_id][cell_index]
            score = "" if row.detector_score is None else repr(row.detector_score)
            lines.append(
                f"{row.cover_id},{row.cell_index},{row.params.sigma_mult!r},"
                f"{row.params.epsilon_mult!r},{row.params.wetcost_mult!r},"
                f"{row.seed},{score},{row.artifact_path or ''}"
            )
    return "\n".join(lines) + "\n"


def cache_from_csv(text: str, grid: GridSpec, rate_bpp: float) -> GridCache:
    """Rebuild cache rows from a manifest; byte accounting is not recoverable."""
    lines = text.strip().split("\n")
    if not lines or lines[0] != CACHE_HEADER:
        raise ValueError("grid cache manifest has a malformed header")
    entries: dict = {}
    any_artifact = False
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 8:
            raise ValueError(f"malformed cache row: {line!r}")
        cover_id, cell_s, sig, eps, wet, seed_s, score_s, path = parts
        row = CacheEntry(
            cover_id,
            int(cell_s),
            ParameterTriple(float(sig), float(eps), float(wet)),
            int(seed_s),
            float(score_s) if score_s else None,
            path or None,
        )
        any_artifact = any_artifact or bool(path)
        entries.setdefault(cover_id, {})[row.cell_index] = row
    return GridCache(grid, rate_bpp, any_artifact, entries)


@dataclass(frozen=True)
class OracleChoice:
    params: ParameterTriple
    score: float
    cell_index: int  # DEFAULT_CELL when the untouched triple wins outright
    default_score: float


def oracle_select(
    cover: Image8,
    detector: DetectorModel,
    grid: GridSpec,
    rate_bpp: float,
    seed: int,
) -> OracleChoice:
    """Exhaustive argmin of predicted stego-probability over the grid.

    The default triple competes as one extra arm but loses ties, and ties
    between cells keep the lowest cell index. seed scopes this cover: cells
    draw derive_seed(seed, cell_index), the default arm derive_seed(seed,
    "default").
    """
    rows = _grid_stegos(cover, grid, rate_bpp, seed)
    stegos = [st.pixels for _, _, _, st in rows] + [_default_arm(cover, rate_bpp, seed).pixels]
    scores = predict_batch(detector, stegos)
    best_at = 0
    for i in range(1, len(rows)):
        if scores[i] < scores[best_at]:
            best_at = i
    default_score = float(scores[-1])
    if default_score < scores[best_at]:
        return OracleChoice(DEFAULT_TRIPLE, default_score, DEFAULT_CELL, default_score)
    return OracleChoice(rows[best_at][1], float(scores[best_at]), rows[best_at][0], default_score)


@dataclass
class AssistantModel:
    head: str
    net: Network
    grid: GridSpec | None
    trained: bool = False
    history: list = field(default_factory=list)  # validation detector-error per epoch
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = -1
    best_checkpoint: bytes | None = None  # weights from the highest-error epoch


def build_sa_cnn(head: str, grid: GridSpec | None = None, seed: int = 0) -> AssistantModel:
    """Three strided conv blocks, then dropout-regularized dense layers.

    The continuous head emits three softplus multipliers; the discrete head a
    softmax over grid cells. Input is (N, 1, H, W) gray pixels scaled to [0, 1].
    """
    if head not in ASSISTANT_HEADS:
        raise ValueError(f"unknown head {head!r}")
    if head == "discrete" and grid is None:
        raise ValueError("discrete head requires a grid")
    layers = [
        Conv2d(8, 5, stride=2), BatchNorm(), ReLU(),
        Conv2d(16, 3, stride=2), BatchNorm(), ReLU(),
        Conv2d(32, 3, stride=2), BatchNorm(), ReLU(),
        Flatten(),
        Dense(256), Dropout(0.4),
        Dense(64), Dropout(0.6),
        Dense(16), Dropout(0.8),
    ]
    if head == "continuous":
        layers += [Dense(3), Softplus()]
    else:
        layers += [Dense(grid.cell_count), Softmax()]
    net = Network(layers, seed=derive_seed(seed, "assistant", head))
    return AssistantModel(head, net, grid)


def cover_tensor(images: Sequence[Image8]) -> np.ndarray:
    """(N, 1, H, W) float64 in [0, 1]."""
    return np.stack([img.pixels for img in images])[:, None].astype(np.float64) / 255.0


def _axis_candidates(values: tuple, index: int) -> list:
    """Midpoints toward each neighbor, clamped to single-value axes."""
    here = values[index]
    out = [here]
    if index > 0:
        out.append(0.5 * (values[index - 1] + here))
    if index + 1 < len(values):
        out.append(0.5 * (here + values[index + 1]))
    return out


def refine_target(
    cover: Image8,
    detector: DetectorModel,
    grid: GridSpec,
    choice: OracleChoice,
    rate_bpp: float,
    seed: int,
) -> ParameterTriple:
    """One coordinate-descent pass around the oracle cell, half a step per axis."""
    if choice.cell_index == DEFAULT_CELL:
        return choice.params
    best = list(choice.params.as_tuple())
    best_score = choice.score
    axes = (grid.sigma_values, grid.epsilon_values, grid.wetcost_values)
    for axis_at, values in enumerate(axes):
        index = values.index(best[axis_at])
        for k, candidate in enumerate(_axis_candidates(values, index)):
            if candidate == best[axis_at]:
                continue
            trial = best.copy()
            trial[axis_at] = candidate
            stego = embed(cover, ParameterTriple(*trial), rate_bpp,
                          derive_seed(seed, "refine", axis_at, k))
            score = float(predict_batch(detector, [stego.pixels])[0])
            if score < best_score:
                best_score = score
                best = trial
    return ParameterTriple(*best)


def _oracle_rows(covers, detector, grid, rate_bpp, cache, seed):
    """(cell index, triple) per cover, from the cache when one is supplied."""
    rows = []
    for cover_id, cover in covers:
        if cache is not None:
            entry = cache.best_cell(cover_id)
            rows.append(OracleChoice(entry.params, entry.detector_score, entry.cell_index, math.inf))
        else:
            cover_seed = derive_seed(seed, "oracle", cover_id)
            scored = _grid_stegos(cover, grid, rate_bpp, cover_seed)
            scores = predict_batch(detector, [st.pixels for _, _, _, st in scored])
            best = int(np.argmin(scores))  # first minimum: lowest cell index
            rows.append(OracleChoice(scored[best][1], float(scores[best]), scored[best][0], math.inf))
    return rows


def _validation_error(model, detector, val_covers, cover_scores, rate_bpp, cache, seed):
    """Detector error rate over validation covers paired with assisted stegos.

    The discrete head looks its predicted cell up in the cache (no embedding);
    the continuous head must embed its predicted triple for every cover.
    """
    out = model.net.forward(cover_tensor([img for _, img in val_covers]), train=False)
    if model.head == "discrete":
        stego_scores = []
        for (cover_id, cover), row in zip(val_covers, out):
            cell = int(row.argmax())
            if cache is not None:
                score = cache.entry(cover_id, cell).detector_score
                if score is None:
                    raise ValueError(f"cache row {cover_id!r}/{cell} has no detector score")
                stego_scores.append(score)
            else:
                stego = embed(cover, model.grid.triple_at(cell), rate_bpp,
                              derive_seed(seed, "val", cover_id))
                stego_scores.append(float(predict_batch(detector, [stego.pixels])[0]))
        stego_scores = np.array(stego_scores, dtype=np.float64)
    else:
        stegos = []
        for (cover_id, cover), row in zip(val_covers, out):
            triple = ParameterTriple(*(float(v) for v in row))
            stegos.append(embed(cover, triple, rate_bpp, derive_seed(seed, "val", cover_id)).pixels)
        stego_scores = predict_batch(detector, stegos)
    wrong = int((cover_scores >= 0.5).sum()) + int((stego_scores < 0.5).sum())
    return wrong / (2 * len(val_covers))


def train_assistant(
    covers: Sequence[tuple],
    detector: DetectorModel,
    grid: GridSpec | None,
    head: str,
    config: TrainConfig,
    rate_bpp: float = 0.4,
    cache: GridCache | None = None,
    refine_targets: bool = False,
) -> AssistantModel:
    """Supervised fit against grid-oracle labels with a frozen detector.

    Discrete: cross-entropy on the oracle's best cell. Continuous: smooth-L1
    on that cell's triple, optionally sharpened by refine_target. Each epoch
    the detector's error rate on the 10% validation split is recorded, and a
    checkpoint is captured whenever that error reaches a new high; the model
    keeps its final weights, with the capture in best_checkpoint.
    """
    covers = list(covers)
    if len(covers) < 2:
        raise ValueError(f"need at least 2 covers to split, got {len(covers)}")
    if not detector.trained:
        raise ValueError("detector has not been trained")
    if grid is None:
        grid = cache.grid if cache is not None else None
    if grid is None:
        raise ValueError("a multiplier grid is required to build oracle targets")
    if cache is not None and grid != cache.grid:
        raise ValueError("grid does not match the cache's grid")

    order = generator(derive_seed(config.seed, "split")).permutation(len(covers))
    n_train = max(1, min(len(covers) - 1, int(math.floor(0.9 * len(covers) + 0.5))))
    train_covers = [covers[i] for i in order[:n_train]]
    val_covers = [covers[i] for i in order[n_train:]]

    oracle = _oracle_rows(train_covers, detector, grid, rate_bpp, cache, config.seed)
    model = build_sa_cnn(head, grid, seed=config.seed)
    x_train = cover_tensor([img for _, img in train_covers])
    if head == "discrete":
        labels = np.array([row.cell_index for row in oracle])
    else:
        triples = []
        for (cover_id, cover), row in zip(train_covers, oracle):
            if refine_targets:
                refine_seed = derive_seed(config.seed, "oracle", cover_id)
                triples.append(refine_target(cover, detector, grid, row, rate_bpp, refine_seed))
            else:
                triples.append(row.params)
        targets = np.array([t.as_tuple() for t in triples])

    cover_scores = predict_batch(detector, [img for _, img in val_covers])
    state = None
    step = 0
    best = -1.0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = generator(derive_seed(config.seed, "order", epoch)).permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            batch = perm[start : start + config.batch_size]
            out = model.net.forward(x_train[batch], train=True, step=step)
            if head == "discrete":
                loss, grad = cross_entropy(out, labels[batch])
            else:
                loss, grad = smooth_l1(out, targets[batch])
            if not math.isfinite(loss):
                raise ValueError(f"non-finite loss at epoch {epoch}, step {step}")
            model.net.backward(grad)
            if state is None:
                state = AdamState.for_params(model.net.params)
            step += 1
            adam_step(model.net.params, model.net.grads, state, config, step, epoch)
        err = _validation_error(model, detector, val_covers, cover_scores, rate_bpp, cache, config.seed)
        model.history.append(err)
        model.epoch_seconds.append(time.perf_counter() - t0)
        if err > best:
            best = err
            model.best_epoch = epoch
            model.best_checkpoint = save_checkpoint(model.net)
    model.trained = True
    return model


def predict_params(m: AssistantModel, cover: Image8) -> ParameterTriple:
    if not m.trained:
        raise ValueError("assistant has not been trained")
    out = m.net.forward(cover_tensor([cover]), train=False)[0]
    if m.head == "continuous":
        return ParameterTriple(*(float(v) for v in out))
    return m.grid.triple_at(int(out.argmax()))


def multiplier_histogram(m: AssistantModel, covers: Sequence[Image8]) -> dict:
    """Counts per 0.0125-wide bin over [1, 2] for each predicted multiplier.

    Predictions are clamped into the bin range so mass equals the cover count.
    """
    if not covers:
        raise ValueError("empty cover set")
    if m.head != "continuous":
        raise ValueError("multiplier histograms need the continuous head")
    if not m.trained:
        raise ValueError("assistant has not been trained")
    out = m.net.forward(cover_tensor(list(covers)), train=False)
    clipped = np.clip(out, HISTOGRAM_EDGES[0], HISTOGRAM_EDGES[-1])
    names = ("sigma_mult", "epsilon_mult", "wetcost_mult")
    return {
        name: np.histogram(clipped[:, i], bins=HISTOGRAM_EDGES)[0]
        for i, name in enumerate(names)
    }


def histogram_to_csv(counts: np.ndarray) -> str:
    lines = [HISTOGRAM_HEADER]
    for left, right, count in zip(HISTOGRAM_EDGES[:-1], HISTOGRAM_EDGES[1:], counts):
        lines.append(f"{left!r},{right!r},{int(count)}")
    return "\n".join(lines) + "\n"


def save_assistant(m: AssistantModel) -> bytes:
    """Checkpoint with enough metadata to rebuild the head and grid."""
    if not m.trained:
        raise ValueError("assistant has not been trained")
    meta = {
        "model": "assistant",
        "head": m.head,
        "grid": m.grid.axes() if m.grid is not None else None,
        "history": [float(v) for v in m.history],
        "best_epoch": m.best_epoch,
    }
    return save_checkpoint(m.net, meta)


def load_assistant(data: bytes) -> AssistantModel:
    net, meta = load_checkpoint(data)
    if meta.get("model") != "assistant":
        raise ValueError("checkpoint does not hold an assistant")
    grid = None
    if meta.get("grid") is not None:
        axes = meta["grid"]
        grid = GridSpec(tuple(axes["sigma"]), tuple(axes["epsilon"]), tuple(axes["wetcost"]))
    m = AssistantModel(meta["head"], net, grid, trained=True)
    m.history = list(meta.get("history", []))
    m.best_epoch = int(meta.get("best_epoch", -1))
    return m
