"""Command-line entry point binding all modules.

Subcommands: synth-data, train, train-classifier, transfer, cycle-check,
sample-shared, eval, and the study commands (convergence-study,
sigma-ablation, coupling-ablation, shift-study, shared-latent, cycle-study).
Every run writes a manifest JSON recording the effective configuration,
seed, package version, and SHA-256 hashes of produced files.

Exit statuses: 0 success, 1 runtime/configuration error, 2 usage error.
The TIMBREBRIDGE_OUT_ROOT environment variable, when set, anchors relative
output paths.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import BridgeConfig, draw_latents, sample_shared, transfer
from .clip import LatentClip, read_clip, write_clip
from .config import (
    Opt,
    RunConfig,
    load_config_file,
    merge_options,
    parse_bool,
    parse_int_list,
)
from .coupling import CouplingConfig
from .dataset import CorpusSpec, build_corpus, load_corpus, save_corpus
from .denoiser import load_denoiser, save_denoiser
from .errors import ConfigurationError, TimbrebridgeError
from .featurecodec import FeatureCodecSpec
from .gmm import demo_pair_2d
from .metrics import (
    embed_clips,
    evaluate_transfer,
    load_classifier,
    save_classifier,
    train_timbre_classifier,
)
from .schedule import ScheduleParams
from .studies import (
    Testbed,
    convergence_study,
    coupling_ablation,
    cycle_study,
    pitch_shift_study,
    shared_latent_study,
    sigma_ablation,
)
from .synthdata import ShiftAugmentation
from .training import TrainingConfig, train

log = logging.getLogger(__name__)

SCHEDULE_OPTS = [
    Opt("sigma-min", float, 0.01, "lowest noise level of the grid"),
    Opt("sigma-max", float, 100.0, "highest noise level of the grid"),
    Opt("rho", float, 9.0, "grid warp exponent"),
    Opt("steps", int, 100, "number of grid nodes N"),
    Opt("sigma-data", float, 1.0, "data scale entering the preconditioning"),
]
COMMON_OPTS = [
    Opt("seed", int, 0, "run seed; all randomness derives from it"),
    Opt("jobs", int, 1, "worker cap for intra-command parallelism"),
]


def _codec_opts():
    return [
        Opt("sample-rate", int, 8000),
        Opt("bands", int, 32),
        Opt("hop", int, 256),
        Opt("window", int, 512),
        Opt("f-lo", float, 60.0),
        Opt("f-hi", float, 3800.0),
        Opt("clip-seconds", float, 2.048),
    ]


COMMANDS: dict[str, list[Opt]] = {
    "synth-data": COMMON_OPTS
    + _codec_opts()
    + [
        Opt("instrument", str, required=True),
        Opt("clips", int, 256, "training clips"),
        Opt("test-clips", int, 64),
        Opt("out", str, required=True),
        Opt("augment-probability", float, 0.0, "pitch-shift augmentation probability"),
        Opt("augment-min", int, 1),
        Opt("augment-max", int, 25),
    ],
    "train": COMMON_OPTS
    + SCHEDULE_OPTS
    + [
        Opt("data", str, required=True, help="dataset directory"),
        Opt("out-ckpt", str, required=True),
        Opt("train-steps", int, 4000),
        Opt("batch-size", int, 16),
        Opt("lr", float, 1e-4),
        Opt("coupling.enabled", parse_bool, True),
        Opt("coupling.time-chunk", int, 4),
        Opt("coupling.channel-chunk", int, 8),
    ],
    "train-classifier": COMMON_OPTS
    + [
        Opt("data", str, required=True, repeatable=True, help="dataset directories"),
        Opt("out-ckpt", str, required=True),
        Opt("classifier-steps", int, 4000),
    ],
    "transfer": COMMON_OPTS
    + [
        Opt("source-ckpt", str, required=True),
        Opt("target-ckpt", str, required=True),
        Opt("input", str, required=True, help="clip file or dataset directory"),
        Opt("output", str, required=True),
        Opt("inference-sigma", float, None, "top noise level (default: sigma_max)"),
        Opt("solver", str, "heun"),
        Opt("steps", int, None, "override solver grid size"),
        Opt("split", str, "test", "split to transfer when input is a dataset"),
        Opt("limit", int, None, "max clips to transfer"),
    ],
    "cycle-check": COMMON_OPTS
    + [
        Opt("source-ckpt", str, required=True),
        Opt("target-ckpt", str, required=True),
        Opt("input", str, required=True),
        Opt("output", str, None),
        Opt("inference-sigma", float, None),
        Opt("solver", str, "heun"),
        Opt("steps", int, None),
        Opt("split", str, "test"),
        Opt("limit", int, None),
        Opt("report", str, required=True, help="CSV of per-clip reconstruction errors"),
    ],
    "sample-shared": COMMON_OPTS
    + [
        Opt("ckpt", str, required=True),
        Opt("n", int, 16, "number of latents to draw"),
        Opt("frames", int, 64, "frame count of the generated clips"),
        Opt("inference-sigma", float, None),
        Opt("solver", str, "heun"),
        Opt("steps", int, None),
        Opt("out", str, required=True),
    ],
    "eval": COMMON_OPTS
    + [
        Opt("originals", str, required=True, help="dataset dir or clip dir"),
        Opt("transferred", str, required=True),
        Opt("target-reference", str, required=True, help="target dataset dir"),
        Opt("classifier-ckpt", str, required=True),
        Opt("report", str, required=True, help="output JSON path"),
        Opt("split", str, "test"),
        Opt("limit", int, None),
    ],
    "convergence-study": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("methods", str, "euler,heun,rk4"),
        Opt("step-counts", parse_int_list, [10, 20, 40, 80, 160]),
        Opt("samples", int, 4000),
        Opt("reference-steps", int, 5120),
        Opt("sigma-max", float, 100.0),
    ],
    "sigma-ablation": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("source-data", str, required=True),
        Opt("target-data", str, required=True),
        Opt("classifier-ckpt", str, required=True),
        Opt("ckpt", str, required=True, repeatable=True,
            help="model checkpoints, format instrument=sigma_max=path"),
        Opt("pairs", str, "100:100,100:50,100:20,100:5",
            help="sigma_max:sigma_top pairs"),
        Opt("clips", int, 200),
    ],
    "coupling-ablation": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("source-data", str, required=True),
        Opt("target-data", str, required=True),
        Opt("classifier-ckpt", str, required=True),
        Opt("sigma-max", float, 100.0),
        Opt("inference-sigma", float, 5.0),
        Opt("train-steps", int, 4000),
        Opt("batch-size", int, 16),
        Opt("clips", int, 100),
        Opt("configs", str, "0:0,4:0,4:8", "time:channel chunk pairs"),
    ],
    "shift-study": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("source-data", str, required=True),
        Opt("target-data", str, required=True),
        Opt("classifier-ckpt", str, required=True),
        Opt("ckpt", str, required=True, repeatable=True),
        Opt("shifts", parse_int_list, [0, -12, -24]),
        Opt("sigma-max", float, 100.0),
        Opt("inference-sigma", float, None, "default: the full sigma_max"),
        Opt("clips", int, 128),
    ],
    "shared-latent": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("a-data", str, required=True),
        Opt("b-data", str, required=True),
        Opt("classifier-ckpt", str, required=True),
        Opt("ckpt", str, required=True, repeatable=True),
        Opt("trials", int, 100),
        Opt("sigma-max", float, 100.0),
        Opt("inference-sigma", float, None),
    ],
    "cycle-study": COMMON_OPTS
    + [
        Opt("out", str, required=True),
        Opt("source-ckpt", str, required=True),
        Opt("target-ckpt", str, required=True),
        Opt("data", str, required=True, help="source dataset directory"),
        Opt("step-counts", parse_int_list, [25, 50, 100, 200]),
        Opt("inference-sigma", float, None),
        Opt("solver", str, "heun"),
        Opt("clips", int, 100),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timbrebridge",
        description="Dual diffusion bridges for unpaired instrument timbre transfer.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in COMMANDS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="INI or JSON config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for o in opts:
            kwargs: dict = {"dest": o.dest, "default": None, "help": o.help}
            if o.repeatable:
                kwargs["action"] = "append"
            else:
                kwargs["type"] = o.type
            p.add_argument(f"--{o.name}", **kwargs)
    return parser


def parse_and_validate(argv: list[str]) -> RunConfig:
    """argv -> validated RunConfig; flags > config file > defaults."""
    args = build_parser().parse_args(argv)
    opts = COMMANDS[args.command]
    cli_values = {o.dest: getattr(args, o.dest) for o in opts}
    sections = load_config_file(args.config) if args.config else None
    effective = merge_options(opts, args.command, cli_values, sections)
    effective["verbose"] = bool(args.verbose)
    return RunConfig(args.command, effective)


# ---------------------------------------------------------------------------
# path and output helpers


def _out_path(value: str | Path) -> Path:
    path = Path(value)
    root = os.environ.get("TIMBREBRIDGE_OUT_ROOT")
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, config: RunConfig, outputs: list[Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_json(),
        "seed": config.get("seed"),
        "version": __version__,
        "outputs": {
            str(p.relative_to(out_dir) if p.is_relative_to(out_dir) else p): _sha256(p)
            for p in outputs
            if p.is_file()
        },
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=1))


def _schedule_from(config: RunConfig) -> ScheduleParams:
    return ScheduleParams(
        sigma_min=config["sigma_min"],
        sigma_max=config["sigma_max"],
        rho=config["rho"],
        n_steps=config["steps"],
        sigma_data=config["sigma_data"],
    )


def _codec_from(config: RunConfig) -> FeatureCodecSpec:
    return FeatureCodecSpec(
        sample_rate=config["sample_rate"],
        n_bands=config["bands"],
        hop=config["hop"],
        window=config["window"],
        f_lo=config["f_lo"],
        f_hi=config["f_hi"],
        clip_seconds=config["clip_seconds"],
    )


def _load_clips(path: Path, split: str, limit) -> list[LatentClip]:
    if (path / "manifest.json").exists():
        corpus = load_corpus(path)
        clips = corpus.clips(split)
    elif path.is_dir():
        clips = [read_clip(p) for p in sorted(path.glob("*.clip"))]
    else:
        clips = [read_clip(path)]
    if limit:
        clips = clips[: int(limit)]
    return clips


def _parse_ckpt_args(entries: list[str]) -> dict[tuple[str, float], Path]:
    out = {}
    for entry in entries:
        parts = entry.split("=")
        if len(parts) != 3:
            raise ConfigurationError(
                f"--ckpt expects instrument=sigma_max=path, got {entry!r}"
            )
        out[(parts[0], float(parts[1]))] = Path(parts[2])
    return out


def _testbed_from_files(
    datasets: dict[str, Path],
    ckpts: dict[tuple[str, float], Path],
    classifier_path: Path,
    seed: int,
) -> Testbed:
    corpora = {name: load_corpus(path) for name, path in datasets.items()}
    models = {key: load_denoiser(path) for key, path in ckpts.items()}
    if not models:
        raise ConfigurationError("no model checkpoints given")
    any_model = next(iter(models.values()))
    codec = next(iter(corpora.values())).codec
    return Testbed(
        codec=codec,
        corpora=corpora,
        models=models,
        reports={},
        classifier=load_classifier(classifier_path),
        base_schedule=any_model.schedule,
        train_config=TrainingConfig(seed=seed),
        seed=seed,
    )


def _write_ablation_csv(path: Path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "dpd", "jaccard", "frechet", "accuracy"])
        for row in table.rows:
            writer.writerow([row.setting, row.dpd, row.jaccard, row.frechet, row.accuracy])


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_synth_data(config: RunConfig) -> list[Path]:
    codec = _codec_from(config)
    augmentation = None
    if config["augment_probability"] > 0:
        augmentation = ShiftAugmentation(
            probability=config["augment_probability"],
            min_shift=config["augment_min"],
            max_shift=config["augment_max"],
        )
    spec = CorpusSpec(
        instrument=config["instrument"],
        n_train=config["clips"],
        n_test=config["test_clips"],
        seed=config["seed"],
        augmentation=augmentation,
    )
    corpus = build_corpus(spec, codec)
    out = _out_path(config["out"])
    save_corpus(out, corpus)
    return [out / "manifest.json", out / "stats.json"]


def _cmd_train(config: RunConfig) -> list[Path]:
    corpus = load_corpus(_out_path(config["data"]))
    coupling = CouplingConfig(
        time_chunk=config["coupling_time_chunk"],
        channel_chunk=config["coupling_channel_chunk"],
        enabled=config["coupling_enabled"],
    )
    tcfg = TrainingConfig(
        n_steps=config["train_steps"],
        batch_size=config["batch_size"],
        lr=config["lr"],
        seed=config["seed"],
        coupling=coupling,
    )
    model, report = train(
        corpus.normalized("train"),
        _schedule_from(config),
        tcfg,
        stats=corpus.stats,
        label=corpus.spec.instrument,
    )
    out = _out_path(config["out_ckpt"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_denoiser(out, model)
    log.info(
        "trained %s: final loss %.4g in %.0f s",
        corpus.spec.instrument,
        report.final_loss,
        report.wall_seconds,
    )
    return [out, Path(str(out) + ".json")]


def _cmd_train_classifier(config: RunConfig) -> list[Path]:
    clips = []
    for entry in config["data"]:
        corpus = load_corpus(_out_path(entry))
        clips.extend(corpus.clips("train"))
    clf = train_timbre_classifier(
        embed_clips(clips), n_steps=config["classifier_steps"], seed=config["seed"]
    )
    out = _out_path(config["out_ckpt"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_classifier(out, clf)
    return [out, Path(str(out) + ".json")]


def _bridge_from(config: RunConfig) -> tuple[BridgeConfig, object, object]:
    source = load_denoiser(_out_path(config["source_ckpt"]))
    target = load_denoiser(_out_path(config["target_ckpt"]))
    sched = source.schedule
    if config.get("steps"):
        sched = sched.with_steps(config["steps"])
    bridge_cfg = BridgeConfig(
        source,
        target,
        sched,
        inference_top_sigma=config.get("inference_sigma"),
        solver_method=config["solver"],
    )
    return bridge_cfg, source, target


def _cmd_transfer(config: RunConfig) -> list[Path]:
    bridge_cfg, source, target = _bridge_from(config)
    clips = _load_clips(_out_path(config["input"]), config["split"], config.get("limit"))
    if source.stats is None or target.stats is None:
        raise ConfigurationError("both checkpoints must carry normalization statistics")
    x = np.stack([source.stats.normalize(c).data for c in clips])
    out_arr = transfer(x, bridge_cfg)
    out = _out_path(config["output"])
    outputs = []
    if len(clips) == 1 and not out.suffix == "":
        write_clip(out, LatentClip(target.stats.denormalize_array(out_arr[0]),
                                   domain_label=target.label))
        outputs.append(out)
    else:
        out.mkdir(parents=True, exist_ok=True)
        for k, arr in enumerate(out_arr):
            path = out / f"transfer-{k:05d}.clip"
            write_clip(path, LatentClip(target.stats.denormalize_array(arr),
                                        domain_label=target.label))
            outputs.append(path)
    return outputs


def _cmd_cycle_check(config: RunConfig) -> list[Path]:
    bridge_cfg, source, target = _bridge_from(config)
    clips = _load_clips(_out_path(config["input"]), config["split"], config.get("limit"))
    x = np.stack([source.stats.normalize(c).data for c in clips])
    forward = transfer(x, bridge_cfg)
    back = transfer(forward, bridge_cfg.swapped())
    err = np.linalg.norm((back - x).reshape(len(x), -1), axis=1)
    norm = np.linalg.norm(x.reshape(len(x), -1), axis=1)
    rel = err / norm
    report_path = _out_path(config["report"])
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_index", "normalized_l2"])
        for k, value in enumerate(rel):
            writer.writerow([k, value])
    outputs = [report_path]
    if config.get("output"):
        out = _out_path(config["output"])
        out.mkdir(parents=True, exist_ok=True)
        for k, arr in enumerate(back):
            path = out / f"cycle-{k:05d}.clip"
            write_clip(path, LatentClip(source.stats.denormalize_array(arr)))
            outputs.append(path)
    log.info("cycle reconstruction: mean %.4g, max %.4g", rel.mean(), rel.max())
    return outputs


def _cmd_sample_shared(config: RunConfig) -> list[Path]:
    model = load_denoiser(_out_path(config["ckpt"]))
    sched = model.schedule
    if config.get("steps"):
        sched = sched.with_steps(config["steps"])
    bridge_cfg = BridgeConfig(
        model,
        model,
        sched,
        inference_top_sigma=config.get("inference_sigma"),
        solver_method=config["solver"],
    )
    shape = (model.arch.channels, config["frames"])
    rng = np.random.default_rng(np.random.SeedSequence([config["seed"], 0x5A]))
    latents = draw_latents(config["n"], shape, bridge_cfg, rng)
    out_arr = sample_shared(latents, model, bridge_cfg)
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for k, arr in enumerate(out_arr):
        path = out / f"sample-{k:05d}.clip"
        write_clip(path, LatentClip(model.stats.denormalize_array(arr),
                                    domain_label=model.label))
        outputs.append(path)
    return outputs


def _cmd_eval(config: RunConfig) -> list[Path]:
    originals = _load_clips(
        _out_path(config["originals"]), config["split"], config.get("limit")
    )
    transferred = _load_clips(
        _out_path(config["transferred"]), config["split"], config.get("limit")
    )
    reference_corpus = load_corpus(_out_path(config["target_reference"]))
    reference = reference_corpus.clips("test")
    classifier = load_classifier(_out_path(config["classifier_ckpt"]))
    report, pairs = evaluate_transfer(
        originals,
        transferred,
        reference,
        classifier,
        reference_corpus.codec,
        reference_corpus.spec.instrument,
    )
    report_path = _out_path(config["report"])
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.to_dict(), indent=1))
    csv_path = Path(str(report_path) + ".pairs.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_index", "dpd", "jaccard"])
        for k, (d, j) in enumerate(pairs):
            writer.writerow([k, d, j])
    return [report_path, csv_path]


def _cmd_convergence_study(config: RunConfig) -> list[Path]:
    source, target = demo_pair_2d()
    schedule = ScheduleParams(sigma_max=config["sigma_max"])
    results = convergence_study(
        source,
        target,
        [m.strip() for m in config["methods"].split(",")],
        config["step_counts"],
        n_samples=config["samples"],
        seed=config["seed"],
        schedule=schedule,
        reference_steps=config["reference_steps"],
    )
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "convergence.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "n_steps", "h", "mean_l2", "transfer_l2", "tv", "slope"]
        )
        for res in results:
            for p in res.points:
                writer.writerow(
                    [res.method, p.n_steps, p.h, p.solve_l2, p.transfer_l2, p.tv, res.slope]
                )
    json_path = out / "convergence.json"
    json_path.write_text(
        json.dumps([dataclasses.asdict(r) for r in results], indent=1, default=float)
    )
    return [csv_path, json_path]


def _cmd_sigma_ablation(config: RunConfig) -> list[Path]:
    datasets = {
        load_corpus(_out_path(config["source_data"])).spec.instrument: _out_path(
            config["source_data"]
        ),
        load_corpus(_out_path(config["target_data"])).spec.instrument: _out_path(
            config["target_data"]
        ),
    }
    names = list(datasets)
    testbed = _testbed_from_files(
        datasets,
        _parse_ckpt_args(config["ckpt"]),
        _out_path(config["classifier_ckpt"]),
        config["seed"],
    )
    pairs = [
        (float(a), float(b))
        for a, b in (pair.split(":") for pair in config["pairs"].split(","))
    ]
    table = sigma_ablation(testbed, names[0], names[1], pairs, n_clips=config["clips"])
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_ablation_csv(out / "sigma_ablation.csv", table)
    (out / "sigma_ablation.json").write_text(
        json.dumps(
            {"rows": [dataclasses.asdict(r) for r in table.rows], "notes": table.notes},
            indent=1,
        )
    )
    return [out / "sigma_ablation.csv", out / "sigma_ablation.json"]


def _cmd_coupling_ablation(config: RunConfig) -> list[Path]:
    src_corpus = load_corpus(_out_path(config["source_data"]))
    tgt_corpus = load_corpus(_out_path(config["target_data"]))
    corpora = {
        src_corpus.spec.instrument: src_corpus,
        tgt_corpus.spec.instrument: tgt_corpus,
    }
    configs = [
        CouplingConfig(int(t), int(c))
        for t, c in (pair.split(":") for pair in config["configs"].split(","))
    ]
    testbed = Testbed(
        codec=src_corpus.codec,
        corpora=corpora,
        models={},
        reports={},
        classifier=load_classifier(_out_path(config["classifier_ckpt"])),
        base_schedule=ScheduleParams(sigma_max=config["sigma_max"]),
        train_config=TrainingConfig(
            n_steps=config["train_steps"],
            batch_size=config["batch_size"],
            seed=config["seed"],
        ),
        seed=config["seed"],
    )
    table = coupling_ablation(
        testbed,
        src_corpus.spec.instrument,
        tgt_corpus.spec.instrument,
        configs,
        sigma_max=config["sigma_max"],
        sigma_top=config["inference_sigma"],
        n_clips=config["clips"],
    )
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_ablation_csv(out / "coupling_ablation.csv", table)
    (out / "coupling_ablation.json").write_text(
        json.dumps(
            {"rows": [dataclasses.asdict(r) for r in table.rows], "notes": table.notes},
            indent=1,
        )
    )
    return [out / "coupling_ablation.csv", out / "coupling_ablation.json"]


def _cmd_shift_study(config: RunConfig) -> list[Path]:
    datasets = {
        load_corpus(_out_path(config["source_data"])).spec.instrument: _out_path(
            config["source_data"]
        ),
        load_corpus(_out_path(config["target_data"])).spec.instrument: _out_path(
            config["target_data"]
        ),
    }
    names = list(datasets)
    testbed = _testbed_from_files(
        datasets,
        _parse_ckpt_args(config["ckpt"]),
        _out_path(config["classifier_ckpt"]),
        config["seed"],
    )
    table = pitch_shift_study(
        testbed,
        names[0],
        names[1],
        shifts=tuple(config["shifts"]),
        sigma_max=config["sigma_max"],
        sigma_top=config.get("inference_sigma"),
        n_clips=config["clips"],
    )
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_ablation_csv(out / "shift_study.csv", table)
    (out / "shift_study.json").write_text(
        json.dumps({"rows": [dataclasses.asdict(r) for r in table.rows]}, indent=1)
    )
    return [out / "shift_study.csv", out / "shift_study.json"]


def _cmd_shared_latent(config: RunConfig) -> list[Path]:
    datasets = {
        load_corpus(_out_path(config["a_data"])).spec.instrument: _out_path(
            config["a_data"]
        ),
        load_corpus(_out_path(config["b_data"])).spec.instrument: _out_path(
            config["b_data"]
        ),
    }
    names = list(datasets)
    testbed = _testbed_from_files(
        datasets,
        _parse_ckpt_args(config["ckpt"]),
        _out_path(config["classifier_ckpt"]),
        config["seed"],
    )
    summary = shared_latent_study(
        testbed,
        names[0],
        names[1],
        n_trials=config["trials"],
        sigma_top=config.get("inference_sigma"),
        sigma_max=config["sigma_max"],
        seed=config["seed"],
    )
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "shared_latent.json"
    path.write_text(json.dumps(dataclasses.asdict(summary), indent=1))
    return [path]


def _cmd_cycle_study(config: RunConfig) -> list[Path]:
    source = load_denoiser(_out_path(config["source_ckpt"]))
    target = load_denoiser(_out_path(config["target_ckpt"]))
    corpus = load_corpus(_out_path(config["data"]))
    clips = corpus.clips("test")[: config["clips"]]
    x = np.stack([source.stats.normalize(c).data for c in clips])
    points = cycle_study(
        source,
        target,
        x,
        config["step_counts"],
        source.schedule,
        sigma_top=config.get("inference_sigma"),
        method=config["solver"],
    )
    out = _out_path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "cycle_study.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_steps", "mean_normalized_l2", "wall_seconds_per_transfer"])
        for p in points:
            writer.writerow([p.n_steps, p.mean_normalized_l2, p.wall_seconds_per_transfer])
    json_path = out / "cycle_study.json"
    json_path.write_text(json.dumps([dataclasses.asdict(p) for p in points], indent=1))
    return [csv_path, json_path]


_DISPATCH = {
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "train-classifier": _cmd_train_classifier,
    "transfer": _cmd_transfer,
    "cycle-check": _cmd_cycle_check,
    "sample-shared": _cmd_sample_shared,
    "eval": _cmd_eval,
    "convergence-study": _cmd_convergence_study,
    "sigma-ablation": _cmd_sigma_ablation,
    "coupling-ablation": _cmd_coupling_ablation,
    "shift-study": _cmd_shift_study,
    "shared-latent": _cmd_shared_latent,
    "cycle-study": _cmd_cycle_study,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config; returns the process exit status."""
    logging.basicConfig(
        level=logging.DEBUG if config.get("verbose") else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    outputs = _DISPATCH[config.command](config)
    manifest_dir = None
    for key in ("out", "output", "out_ckpt", "report"):
        if config.get(key):
            candidate = _out_path(config[key])
            manifest_dir = candidate if candidate.is_dir() else candidate.parent
            break
    if manifest_dir is not None:
        _write_manifest(manifest_dir, config, [Path(p) for p in outputs])
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_and_validate(argv)
    except TimbrebridgeError as exc:
        # bad flags/config keys are usage errors, like argparse's own
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(config)
    except TimbrebridgeError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
