"""Acceptance gate: eleven criteria, one pass/fail line each.

Every criterion prints `criterion NN PASS|FAIL: ...` to the real stdout so the
verdicts survive pytest's capture. Stated runtime budgets are asserted, not
just reported. Full-scale reference figures appear in the printed lines only
as labels; nothing desk-scale is asserted against them.
"""

import dataclasses
import sys
import time
from contextlib import contextmanager

import numpy as np

from oracles import cost_double_sum
from stegbench.assistant import (
    GridSpec,
    build_sa_cnn,
    default_grid,
    oracle_select,
    precompute_grid,
    thinned_grid,
)
from stegbench.costs import (
    DEFAULT_TRIPLE,
    CostMap,
    compute_cost_map,
    rho_unwetted,
)
from stegbench.detectors import (
    ConfusionMatrix,
    confusion_from_csv,
    error_rate,
    evaluate,
    train_detector,
)
from stegbench.embedding import (
    LOG2_3,
    embed,
    lsb_match_baseline,
    payload_entropy,
    round_probs,
    simulate_embedding,
    solve_lambda,
)
from stegbench.experiments import (
    DEFAULT_CELL,
    ExperimentConfig,
    ExperimentRun,
    render_report,
    run_discrete_comparison,
)
from stegbench.media import Image8, pgm_size_bytes, read_pgm, synth_cover, write_pgm
from stegbench.nnet import (
    BatchNorm,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    Network,
    ReLU,
    Softmax,
    Softplus,
    TrainConfig,
    gradcheck,
)
from stegbench.rng import derive_seed, generator
from stegbench.wavelets import daubechies8_filters, directional_kernels

PIPELINE_CONFIG = ExperimentConfig(
    dataset="synth:10",
    alt_dataset="synth:4:4.0",
    image_size=24,
    split_ratio=0.5,
    detector_epochs=25,
    detector_batch_size=4,
    assistant_epochs=3,
    assistant_batch_size=4,
    grid_stride=6,
    seed=3,
)

_SHARED = {}  # criterion 1 stashes its fragments for criterion 11

VERDICTS = []  # echoed by the terminal-summary hook in conftest.py


def _say(line: str):
    VERDICTS.append(line)
    print(line)
    sys.__stdout__.flush()


@contextmanager
def criterion(number: int, title: str, budget: float | None = None):
    info = {}
    start = time.perf_counter()
    try:
        yield info
    except BaseException:
        _say(f"criterion {number:2d} FAIL: {title}")
        raise
    elapsed = time.perf_counter() - start
    if budget is not None and not elapsed < budget:
        _say(f"criterion {number:2d} FAIL: {title} ({elapsed:.1f}s, budget {budget:.0f}s)")
        raise AssertionError(f"criterion {number} took {elapsed:.1f}s, budget {budget:.0f}s")
    note = f"; {info['note']}" if "note" in info else ""
    _say(f"criterion {number:2d} PASS: {title} ({elapsed:.1f}s{note})")


def _full_pipeline(out_dir):
    config = dataclasses.replace(PIPELINE_CONFIG, output_dir=str(out_dir))
    run = ExperimentRun(config)
    fragments = [
        run.baseline(),
        run.assisted(),
        run.cross_detector(),
        run.transfer(),
        run.compare_discrete(),
    ]
    csvs = {}
    for frag in fragments:
        csvs.update(frag.csv_files)
    _, held = run.split()
    stego_blob = b"".join(write_pgm(run.default_stego(cid, img)) for cid, img in held)
    pairs, _ = run.assisted_pairs(held, config.assisted_mode)
    stego_blob += b"".join(write_pgm(st) for _, st in pairs)
    return fragments, csvs, stego_blob


def test_criterion_01_codec_and_determinism(tmp_path):
    with criterion(1, "codec round-trip and run determinism", budget=60.0) as info:
        rng = generator(derive_seed("acceptance", "codec"))
        for _ in range(1000):
            w = int(rng.integers(1, 48))
            h = int(rng.integers(1, 48))
            img = Image8(w, h, rng.integers(0, 256, (h, w), dtype=np.uint8))
            assert read_pgm(write_pgm(img)) == img

        frags_a, csvs_a, stegos_a = _full_pipeline(tmp_path / "run1")
        frags_b, csvs_b, stegos_b = _full_pipeline(tmp_path / "run2")
        assert stegos_a == stegos_b
        assert set(csvs_a) == set(csvs_b)
        for name in csvs_a:
            assert csvs_a[name] == csvs_b[name], f"{name} differs between runs"
        _SHARED["fragments"] = frags_a
        info["note"] = f"{len(csvs_a)} CSVs and {2 * 10} stegos byte-identical"


def test_criterion_02_payload_calibration():
    with criterion(2, "payload calibration at 0.4 bpp", budget=30.0) as info:
        target = 0.4 * 4096
        worst = 0.0
        for i in range(100):
            cover = synth_cover(derive_seed("acceptance", "payload", i), 64, 64, 2.0)
            pm = solve_lambda(compute_cost_map(cover, DEFAULT_TRIPLE), target)
            worst = max(worst, abs(payload_entropy(pm) - target) / target)
        assert worst < 1e-3
        info["note"] = f"worst relative entropy error {worst:.2e} over 100 covers"


def test_criterion_03_capacity_endpoint():
    with criterion(3, "capacity request yields uniform thirds") as info:
        rng = generator(derive_seed("acceptance", "capacity"))
        synthetic = CostMap(
            rng.uniform(0.1, 5.0, (32, 32)), rng.uniform(0.1, 5.0, (32, 32)), 1e8
        )
        base = synth_cover(derive_seed("acceptance", "capacity", "img"), 32, 32, 2.0)
        interior = Image8(32, 32, np.clip(base.pixels, 1, 254))
        from_cover = compute_cost_map(interior, DEFAULT_TRIPLE)
        assert not from_cover.wet_mask()[0].any() and not from_cover.wet_mask()[1].any()
        worst = 0.0
        for c in (synthetic, from_cover):
            pm = solve_lambda(c, c.rho_plus.size * LOG2_3)
            worst = max(
                worst,
                float(np.abs(pm.p_plus - 1 / 3).max()),
                float(np.abs(pm.p_minus - 1 / 3).max()),
            )
        assert worst < 1e-6
        info["note"] = f"max |p - 1/3| = {worst:.2e}"


def test_criterion_04_cost_model_properties():
    with criterion(4, "cost monotonicity, sanity, and double-sum oracle") as info:
        sigmas = (0.5, 1.0, 1.4, 2.0)
        for i in range(20):
            cover = synth_cover(derive_seed("acceptance", "mono", i), 32, 32, 2.0)
            rhos = [rho_unwetted(cover, s) for s in sigmas]
            for rho in rhos:
                assert np.all(np.isfinite(rho)) and np.all(rho >= 0.0)
            for lo, hi in zip(rhos, rhos[1:]):
                assert np.all(hi < lo)

        kernels = directional_kernels(daubechies8_filters())
        worst = 0.0
        for i in range(2):
            cover = synth_cover(derive_seed("acceptance", "oracle", i), 16, 16, 2.0)
            for sigma in (0.7, 1.3):
                fast = rho_unwetted(cover, sigma)
                slow = cost_double_sum(cover.pixels.astype(float), kernels, sigma)
                worst = max(worst, float(np.abs(fast - slow).max()))
        assert worst < 1e-9
        info["note"] = f"oracle agreement {worst:.2e} on 16x16"


def test_criterion_05_wet_safety():
    with criterion(5, "wet pixels untouched across 10^4 embeddings") as info:
        rng = generator(derive_seed("acceptance", "wet"))
        embeddings = 0
        wet_seen = 0
        for ci in range(100):
            base = synth_cover(derive_seed("acceptance", "wet", ci), 16, 16, 1.5)
            px = base.pixels.copy()
            roll = rng.random(px.shape)
            px[roll < 0.05] = 0
            px[roll > 0.95] = 255
            cover = Image8(16, 16, px)
            cm = compute_cost_map(cover, DEFAULT_TRIPLE)
            wet_plus, wet_minus = cm.wet_mask()
            wet_seen += int(wet_plus.sum()) + int(wet_minus.sum())
            pm = round_probs(solve_lambda(cm, 0.4 * cover.size), 1.0)
            for s in range(100):
                st = simulate_embedding(
                    cover, pm, derive_seed("acceptance", "wet", ci, s), DEFAULT_TRIPLE
                )
                delta = st.pixels.pixels.astype(np.int16) - cover.pixels.astype(np.int16)
                assert np.abs(delta).max() <= 1
                assert np.all(delta[wet_plus] <= 0)
                assert np.all(delta[wet_minus] >= 0)
                assert np.all(delta[wet_plus & wet_minus] == 0)
                assert st.pixels.pixels.min() >= 0 and st.pixels.pixels.max() <= 255
                embeddings += 1
        assert embeddings == 10_000
        assert wet_seen > 0
        info["note"] = f"{wet_seen} wet directions across the masks, zero violations"


GRADCHECK_NETS = {
    "dense": lambda: (
        Network([Dense(5), Softplus(), Dense(3)], seed=1),
        np.random.default_rng(20).normal(size=(4, 6)),
    ),
    "conv2d": lambda: (
        Network([Conv2d(3, 3, stride=2)], seed=2),
        np.random.default_rng(21).normal(size=(2, 2, 9, 9)),
    ),
    "batchnorm": lambda: (
        Network([BatchNorm()], seed=3),
        np.random.default_rng(22).normal(size=(4, 5)),
    ),
    "relu": lambda: (
        Network([Dense(6), ReLU(), Dense(2)], seed=4),
        np.random.default_rng(23).normal(size=(3, 4)),
    ),
    "softplus": lambda: (
        Network([Dense(4), Softplus()], seed=5),
        np.random.default_rng(24).normal(size=(3, 5)),
    ),
    "dropout": lambda: (
        Network([Dense(6), Dropout(0.3), Dense(2)], seed=6),
        np.random.default_rng(25).normal(size=(3, 4)),
    ),
    "softmax": lambda: (
        Network([Dense(4), Softmax()], seed=7),
        np.random.default_rng(26).normal(size=(3, 5)),
    ),
    "flatten": lambda: (
        Network([Conv2d(3, 3), Softplus(), Flatten(), Dense(2)], seed=8),
        np.random.default_rng(27).normal(size=(2, 1, 8, 8)),
    ),
    "gap": lambda: (
        Network([Conv2d(4, 3), BatchNorm(), Softplus(), GlobalAvgPool(), Dense(3)], seed=9),
        np.random.default_rng(28).normal(size=(2, 1, 8, 8)),
    ),
}


def test_criterion_06_gradient_checks():
    with criterion(6, "gradcheck every layer kind and both heads", budget=120.0) as info:
        worst = 0.0
        for name, build in GRADCHECK_NETS.items():
            net, x = build()
            err = gradcheck(net, x)
            assert err < 1e-4, f"{name} gradcheck {err:.2e}"
            worst = max(worst, err)
        grid = GridSpec((1.3, 1.4), (1.4,), (1.5,))
        x = np.random.default_rng(29).normal(size=(2, 1, 24, 24))
        for head in ("continuous", "discrete"):
            model = build_sa_cnn(head, grid, seed=30)
            err = gradcheck(model.net, x)
            assert err < 1e-4, f"{head} head gradcheck {err:.2e}"
            worst = max(worst, err)
        info["note"] = f"worst relative error {worst:.2e}"


def test_criterion_07_detector_sanity():
    with criterion(7, "detector separates 1.0 bpp LSB stegos", budget=300.0) as info:
        pairs = []
        for i in range(200):
            cover = synth_cover(derive_seed("acceptance", "det", i), 64, 64, 2.0)
            stego = lsb_match_baseline(cover, 1.0, derive_seed("acceptance", "det", "s", i))
            pairs.append((cover, stego.pixels))
        train, held = pairs[:100], pairs[100:]
        config = TrainConfig(epochs=40, batch_size=16, seed=derive_seed("acceptance", "det", "t"))
        model = train_detector(train, "residual_features", config)
        accuracy = 1.0 - error_rate(evaluate(model, held))
        assert accuracy >= 0.90

        # break the label-signal link by swapping roles in exactly half the
        # pairs; average a few retrainings so one overfit draw cannot dominate
        noise_accuracies = []
        for trial in range(3):
            g = generator(derive_seed("acceptance", "det", "shuffle", trial))
            keep = set(g.permutation(100)[:50].tolist())
            shuffled = [(s, c) if k in keep else (c, s) for k, (c, s) in enumerate(train)]
            noise_config = TrainConfig(
                epochs=40, batch_size=16, seed=derive_seed("acceptance", "det", "noise", trial)
            )
            noise_model = train_detector(shuffled, "residual_features", noise_config)
            noise_accuracies.append(1.0 - error_rate(evaluate(noise_model, held)))
        noise_accuracy = float(np.mean(noise_accuracies))
        assert 0.40 <= noise_accuracy <= 0.60
        info["note"] = f"held-out accuracy {100 * accuracy:.1f}%, shuffled {100 * noise_accuracy:.1f}%"


def test_criterion_08_oracle_dominance():
    with criterion(8, "oracle dominance on the 7x7x7 sub-grid", budget=1200.0) as info:
        det_pairs = []
        for i in range(60):
            cover = synth_cover(derive_seed("acceptance", "dom", "train", i), 64, 64, 2.0)
            stego = embed(cover, DEFAULT_TRIPLE, 0.4, derive_seed("acceptance", "dom", "emb", i))
            det_pairs.append((cover, stego.pixels))
        detector = train_detector(
            det_pairs,
            "residual_features",
            TrainConfig(epochs=40, batch_size=16, seed=derive_seed("acceptance", "dom", "det")),
        )

        grid = thinned_grid(2)
        assert grid.cell_count == 343
        covers = [
            synth_cover(derive_seed("acceptance", "dom", "sel", i), 64, 64, 2.0)
            for i in range(100)
        ]
        baseline_pairs = []
        assisted_pairs = []
        oracle_scores = []
        default_scores = []
        for i, cover in enumerate(covers):
            seed = derive_seed("acceptance", "dom", "choice", i)
            choice = oracle_select(cover, detector, grid, 0.4, seed)
            assert choice.score <= choice.default_score
            oracle_scores.append(choice.score)
            default_scores.append(choice.default_score)
            baseline_pairs.append(
                (cover, embed(cover, DEFAULT_TRIPLE, 0.4, derive_seed(seed, "default")).pixels)
            )
            arm = "default" if choice.cell_index == DEFAULT_CELL else choice.cell_index
            assisted_pairs.append(
                (cover, embed(cover, choice.params, 0.4, derive_seed(seed, arm)).pixels)
            )
        assert np.mean(oracle_scores) <= np.mean(default_scores)
        base_err = error_rate(evaluate(detector, baseline_pairs))
        assisted_err = error_rate(evaluate(detector, assisted_pairs))
        assert assisted_err >= base_err
        delta = 100.0 * (assisted_err - base_err)
        info["note"] = (
            f"baseline {100 * base_err:.1f}%, assisted {100 * assisted_err:.1f}%, "
            f"delta {delta:+.1f} points (full-scale reference +8.1)"
        )


def test_criterion_09_grid_contract(tmp_path):
    with criterion(9, "13-value grid and bit-exact lazy regeneration") as info:
        grid = default_grid()
        values = (
            1.3, 1.325, 1.35, 1.3625, 1.375, 1.3875, 1.4,
            1.4125, 1.425, 1.4375, 1.45, 1.475, 1.5,
        )
        assert grid.sigma_values == values
        assert grid.epsilon_values == values
        assert grid.wetcost_values == values
        assert grid.cell_count == 13 ** 3 == 2197

        covers = [
            (f"g{i}", synth_cover(derive_seed("acceptance", "grid", i), 24, 24, 2.0))
            for i in range(2)
        ]
        cache = precompute_grid(
            covers, grid, 0.4, derive_seed("acceptance", "grid", "seed"),
            materialize_dir=tmp_path,
        )
        lookup = dict(covers)
        rng = generator(derive_seed("acceptance", "grid", "sample"))
        for _ in range(10):
            cid = covers[int(rng.integers(0, 2))][0]
            cell = int(rng.integers(0, grid.cell_count))
            regen = cache.regenerate(lookup[cid], cid, cell)
            stored = (tmp_path / cache.entry(cid, cell).artifact_path).read_bytes()
            assert write_pgm(regen.pixels) == stored
        info["note"] = "10 sampled cells regenerate byte-identically"


def test_criterion_10_discrete_vs_continuous(tmp_path):
    with criterion(10, "materialized cache makes discrete epochs faster") as info:
        config = ExperimentConfig(
            dataset="synth:20",
            image_size=64,
            split_ratio=0.5,
            detector_epochs=30,
            detector_batch_size=4,
            assistant_epochs=6,
            assistant_batch_size=4,
            ablation="sigma",
            grid_stride=6,
            seed=11,
            output_dir=str(tmp_path),
        )
        frag = run_discrete_comparison(config)
        rows = frag.data["rows"]
        assert rows["discrete"]["mean_epoch_seconds"] < rows["continuous"]["mean_epoch_seconds"]

        covers_bytes = 10 * pgm_size_bytes(64, 64)
        assert rows["continuous"]["storage_bytes"] == covers_bytes
        assert rows["discrete"]["storage_bytes"] == covers_bytes + frag.data["cache_bytes"]
        on_disk = sum(f.stat().st_size for f in (tmp_path / "cache").iterdir())
        assert frag.data["cache_bytes"] == on_disk

        text = render_report([frag])["report.md"].decode("utf-8")
        assert "704 MB" in text and "2.8 TB" in text
        info["note"] = (
            f"epoch means {rows['discrete']['mean_epoch_seconds']:.3f}s (discrete) vs "
            f"{rows['continuous']['mean_epoch_seconds']:.3f}s (continuous); storage exact"
        )


def test_criterion_11_report_integrity(tmp_path):
    with criterion(11, "error rates recompute from matrix cells") as info:
        worked = ConfusionMatrix(357, 143, 139, 361)
        assert worked.percentages() == (35.7, 14.3, 13.9, 36.1)
        assert error_rate(worked) == 0.282

        fragments = _SHARED.get("fragments")
        if fragments is None:
            fragments, _, _ = _full_pipeline(tmp_path)
        checked = 0
        for frag in fragments:
            for key, err_key in (("counts", "error_rate"), ("baseline_counts", "baseline_error_rate")):
                if key in frag.data:
                    counts = frag.data[key]
                    recomputed = error_rate(ConfusionMatrix(**counts))
                    assert frag.data[err_key] == recomputed
                    checked += 1
        files = render_report(fragments)
        for name, blob in files.items():
            if name.endswith("_confusion.csv"):
                text = blob.decode("utf-8")
                cm = confusion_from_csv(text)
                stored = text.splitlines()[1].split(",")[4]
                assert stored == f"{error_rate(cm):.6f}"
                checked += 1
        assert checked >= 8
        info["note"] = f"worked example exact; {checked} emitted rates recomputed"
