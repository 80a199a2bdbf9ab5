"""The five pipeline stages behind the CLI commands.

Stages are content-addressed: each consults the store first and returns the
existing artifact when its digest is already present (unless forced).  A
stage builds missing parents automatically; since digests pin every input,
rebuilding is idempotent.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .. import baselines as bl
from .. import codec as codec_mod
from .. import neo as neo_mod
from ..adapters import MonolithicAdapter, NeoAdapter
from ..dataset_io import read_dataset, write_dataset
from ..domains import ARITHMETIC, GRID, IMAGE
from ..inference import DEFAULT_EPSILON, SearchConfig
from ..metrics import (
    alignment_matrix,
    evaluate,
    ground_truth_mean_length,
    primitiveness,
    score_kind,
)
from ..oracle_stub import OracleStubAdapter
from ..splits import REGIME_COMP_OOD, build_split, generate_eval_set, generate_training_set
from . import plots
from .config import (
    METHOD_CONT,
    METHOD_CONT_OPT,
    METHOD_DISC,
    METHOD_NEO,
    METHOD_STUB,
    ExperimentConfig,
)
from .store import ArtifactError, ArtifactStore


class GateFailure(RuntimeError):
    """A pretraining quality gate was not met."""


CODEC_GATES = {GRID: 0.99, ARITHMETIC: 0.999, IMAGE: 0.03}


def _seed_int(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _log(message: str) -> None:
    print(f"[otib] {message}", flush=True)


# --- gen-data ---------------------------------------------------------------


def cmd_gen_data(config: ExperimentConfig, store: ArtifactStore, force: bool = False) -> Path:
    digest = config.dataset_digest()
    out = store.dir_for("datasets", digest)
    with store.lock(digest):
        if store.is_complete("datasets", digest) and not force:
            store.verify("datasets", digest)
            return out
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        spec = build_split(config.domain, config.alpha, config.seeds.split)
        opts = config.domain_opts()
        files = []

        train_rng = np.random.default_rng(
            np.random.SeedSequence([config.seeds.split, 0xDA7A, 0])
        )
        train = generate_training_set(spec, config.data.n_train, train_rng, **opts)
        write_dataset(out / "train.otib", train, spec)
        files += ["train.otib", "train.truth.otib"]

        regime_sizes = {
            "id": config.data.n_id,
            "comp_ood": config.data.n_comp,
            "len_ood": config.data.n_len,
        }
        for i, (regime, n) in enumerate(regime_sizes.items()):
            if regime == REGIME_COMP_OOD and not spec.comp_ood_classes:
                continue  # full coverage: nothing is held out
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seeds.split, 0xDA7A, 1 + i])
            )
            ev = generate_eval_set(spec, regime, n, rng, **opts)
            write_dataset(out / f"eval_{regime}.otib", ev, spec)
            files += [f"eval_{regime}.otib", f"eval_{regime}.truth.otib"]

        store.finalize(
            "datasets",
            digest,
            config={
                "domain": config.domain,
                "alpha": config.alpha,
                "split_seed": config.seeds.split,
                "data": asdict(config.data),
            },
            parents={},
            files=files,
            extra={"split": spec.to_dict(), "elapsed_s": round(time.time() - t0, 2)},
        )
        _log(f"datasets/{digest[:16]} written ({time.time() - t0:.1f}s)")
    return out


def load_dataset(store: ArtifactStore, config: ExperimentConfig, name: str):
    directory = store.dir_for("datasets", config.dataset_digest())
    return read_dataset(directory / f"{name}.otib")


# --- pretrain ----------------------------------------------------------------


def _codec_gate_value(codec, eval_xs, eval_ys) -> float:
    obs = np.concatenate([eval_xs, eval_ys])
    return codec_mod.roundtrip_error(codec, obs)


def cmd_pretrain(config: ExperimentConfig, store: ArtifactStore, force: bool = False) -> Path:
    digest = config.codec_digest()
    out = store.dir_for("codecs", digest)
    with store.lock(digest):
        if store.is_complete("codecs", digest) and not force:
            store.verify("codecs", digest)
            return out
        cmd_gen_data(config, store)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        train, _, _ = load_dataset(store, config, "train")
        corpus = np.concatenate([train.xs, train.ys])
        if len(corpus) > config.data.codec_corpus:
            rng = np.random.default_rng(_seed_int(config.seeds.train, 0xC0DE))
            idx = rng.choice(len(corpus), size=config.data.codec_corpus, replace=False)
            corpus = corpus[idx]
        codec, provenance = codec_mod.pretrain_codec(
            corpus, config.codec, seed=_seed_int(config.seeds.train, 0xC0DE, 1)
        )

        held, _, _ = load_dataset(store, config, "eval_id")
        gate_error = _codec_gate_value(codec, held.xs, held.ys)
        threshold = CODEC_GATES[config.domain]
        if config.domain == IMAGE:
            gate_ok = gate_error <= threshold
            gate_desc = f"mean L1 {gate_error:.4f} (must be <= {threshold})"
        else:
            accuracy = 1.0 - gate_error
            gate_ok = accuracy >= threshold
            gate_desc = f"exact round-trip {accuracy:.4f} (must be >= {threshold})"
        provenance["gate"] = {"value": gate_error, "description": gate_desc, "ok": gate_ok}
        codec_mod.save_codec(out / "codec.pt", codec, provenance)
        (out / "provenance.json").write_text(json.dumps(provenance, indent=2))
        if not gate_ok:
            raise GateFailure(f"codec reconstruction gate failed: {gate_desc} ({out})")
        store.finalize(
            "codecs",
            digest,
            config=asdict(config.codec),
            parents={"datasets": config.dataset_digest()},
            files=["codec.pt", "provenance.json"],
            extra={"elapsed_s": round(time.time() - t0, 2)},
        )
        _log(f"codecs/{digest[:16]} written, {gate_desc} ({time.time() - t0:.1f}s)")
    return out


def load_trained_codec(store: ArtifactStore, config: ExperimentConfig):
    directory = store.dir_for("codecs", config.codec_digest())
    codec, _ = codec_mod.load_codec(directory / "codec.pt", expected_config=config.codec)
    return codec


# --- train -------------------------------------------------------------------


def _save_run_checkpoint(path: Path, config, model, optimizer, epoch, step, generator):
    torch.save(
        {
            "kind": "run",
            "method": config.method,
            "config_digest": config.run_digest(),
            "model_state": model.state_dict(),
            "optimizer_state": optimizer.state_dict(),
            "epoch": epoch,
            "step": step,
            "torch_generator": generator.get_state(),
        },
        path,
    )


def _load_run_checkpoint(path: Path, config, model, optimizer, generator):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("config_digest") != config.run_digest():
        raise ArtifactError(
            f"checkpoint {path} belongs to a different run configuration; "
            "refusing to resume"
        )
    model.load_state_dict(payload["model_state"])
    if optimizer is not None and payload.get("optimizer_state") is not None:
        optimizer.load_state_dict(payload["optimizer_state"])
    if generator is not None and payload.get("torch_generator") is not None:
        generator.set_state(payload["torch_generator"])
    return payload["epoch"], payload["step"]


def _build_model(config: ExperimentConfig, codec):
    state_shape = (
        (6, config.codec.latent_dim) if config.domain == ARITHMETIC else (config.codec.latent_dim,)
    )
    seed = _seed_int(config.seeds.train, 0x10DE1)
    if config.method == METHOD_NEO:
        return neo_mod.init_neo(config.model, config.domain, state_shape, seed)
    return bl.MonolithicModel(config.model, config.domain, state_shape, seed)


def cmd_train(config: ExperimentConfig, store: ArtifactStore, force: bool = False) -> Path:
    if config.method == METHOD_STUB:
        raise ValueError("the oracle stub has no trainable parameters")
    digest = config.run_digest()
    out = store.dir_for("runs", digest)
    with store.lock(digest):
        if store.is_complete("runs", digest) and not force:
            store.verify("runs", digest)
            return out
        cmd_pretrain(config, store)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        codec = load_trained_codec(store, config)
        codec_digest_before = codec_mod.param_digest(codec)
        train, _, _ = load_dataset(store, config, "train")
        model = _build_model(config, codec)
        mcfg = config.model
        is_neo = config.method == METHOD_NEO
        optimizer = (
            neo_mod.make_optimizer(model, mcfg)
            if is_neo
            else bl.make_baseline_optimizer(model, mcfg)
        )
        generator = torch.Generator().manual_seed(_seed_int(config.seeds.train, 0x57E9))

        n = len(train)
        steps_per_epoch = max(1, n // mcfg.batch_size)
        total_steps = mcfg.epochs * steps_per_epoch
        start_epoch, step = 0, 0
        ckpt_path = out / "checkpoint.pt"
        if ckpt_path.exists() and not force:
            start_epoch, step = _load_run_checkpoint(
                ckpt_path, config, model, optimizer, generator
            )
            _log(f"resuming runs/{digest[:16]} from epoch {start_epoch}")

        x_all = codec.obs_to_tensor(train.xs)
        y_all = codec.obs_to_tensor(train.ys)
        log_path = out / "train_log.jsonl"
        log_fh = open(log_path, "a")
        try:
            for epoch in range(start_epoch, mcfg.epochs):
                perm_rng = np.random.default_rng(
                    np.random.SeedSequence([config.seeds.train, 0xE90C, epoch])
                )
                perm = perm_rng.permutation(n)
                epoch_stats = []
                for b in range(steps_per_epoch):
                    idx = perm[b * mcfg.batch_size : (b + 1) * mcfg.batch_size]
                    if len(idx) == 0:
                        continue
                    bx, by = x_all[idx], y_all[idx]
                    if is_neo:
                        stats = neo_mod.train_step(
                            model, codec, optimizer, bx, by, mcfg, step, total_steps, generator
                        )
                    else:
                        stats = bl.train_baseline_step(
                            model, codec, optimizer, bx, by, mcfg, step, total_steps, generator
                        )
                    epoch_stats.append(stats)
                    step += 1
                mean_loss = float(np.mean([s.loss for s in epoch_stats]))
                record = {"epoch": epoch, "step": step, "loss": mean_loss}
                record.update(
                    {
                        k: float(np.mean([getattr(s, k) for s in epoch_stats]))
                        for k in ("recon",)
                    }
                )
                if is_neo:
                    record["mean_selected_length"] = float(
                        np.mean([s.mean_selected_length for s in epoch_stats])
                    )
                    record["code_usage"] = np.sum(
                        [s.code_usage for s in epoch_stats], axis=0
                    ).tolist()
                    record["grounding"] = float(np.mean([s.grounding for s in epoch_stats]))
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
                _save_run_checkpoint(ckpt_path, config, model, optimizer, epoch + 1, step, generator)
        except codec_mod.TrainingDivergedError as exc:
            diag = {"error": str(exc), "step": exc.step, "epoch_reached": start_epoch}
            (out / "divergence.json").write_text(json.dumps(diag, indent=2))
            raise
        finally:
            log_fh.close()

        if codec_mod.param_digest(codec) != codec_digest_before:
            raise ArtifactError("state codec parameters changed during training")
        store.finalize(
            "runs",
            digest,
            config={"method": config.method, "model": asdict(mcfg)},
            parents={"codecs": config.codec_digest(), "datasets": config.dataset_digest()},
            files=["checkpoint.pt", "train_log.jsonl"],
            extra={
                "steps": step,
                "elapsed_s": round(time.time() - t0, 2),
                "codec_frozen": True,
            },
        )
        _log(f"runs/{digest[:16]} trained {step} steps ({time.time() - t0:.1f}s)")
    return out


def load_run(store: ArtifactStore, config: ExperimentConfig):
    codec = load_trained_codec(store, config)
    model = _build_model(config, codec)
    directory = store.dir_for("runs", config.run_digest())
    _load_run_checkpoint(directory / "checkpoint.pt", config, model, None, None)
    model.eval()
    return model, codec


# --- adapters ------------------------------------------------------------------


def make_adapter(
    config: ExperimentConfig,
    store: ArtifactStore,
    regime: str,
    search: Optional[SearchConfig] = None,
):
    if config.method == METHOD_STUB:
        return OracleStubAdapter(config.domain)
    model, codec = load_run(store, config)
    if config.method == METHOD_NEO:
        lam = (
            config.eval.lambda_mdl
            if config.eval.lambda_mdl is not None
            else config.model.lambda_mdl_end
        )
        epsilon = (
            config.eval.epsilon
            if config.eval.epsilon is not None
            else DEFAULT_EPSILON[config.domain]
        )
        return NeoAdapter(
            model,
            codec,
            k_max=config.eval_k_max(regime),
            epsilon=epsilon,
            lambda_mdl=lam,
            search=search,
        )
    opt_steps = (
        config.model.grad_search_steps if config.method == METHOD_CONT_OPT else 0
    )
    return MonolithicAdapter(
        model, codec, opt_steps=opt_steps, opt_lr=config.model.grad_search_lr
    )


def _subset(eval_set, n: Optional[int]):
    if n is None or n >= len(eval_set):
        return eval_set
    import dataclasses as dc

    return dc.replace(
        eval_set,
        xs=eval_set.xs[:n],
        ys=eval_set.ys[:n],
        xq=eval_set.xq[:n],
        yq=eval_set.yq[:n],
        truth_idx=eval_set.truth_idx[:n],
    )


# --- eval ----------------------------------------------------------------------


def cmd_eval(config: ExperimentConfig, store: ArtifactStore, force: bool = False) -> Path:
    digest = config.eval_digest()
    out = store.dir_for("evals", digest)
    with store.lock(digest):
        if store.is_complete("evals", digest) and not force:
            store.verify("evals", digest)
            return out
        if config.method != METHOD_STUB:
            cmd_train(config, store)
        else:
            cmd_gen_data(config, store)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        files = []
        reports = {}
        for regime in config.eval.regimes:
            dataset_dir = store.dir_for("datasets", config.dataset_digest())
            path = dataset_dir / f"eval_{regime}.otib"
            if not path.exists():
                _log(f"eval: regime {regime} not materialized (empty at alpha=1.0?); skipped")
                continue
            ev, _, _ = read_dataset(path)
            ev = _subset(ev, config.eval.n_instances)
            adapter = make_adapter(config, store, regime)
            report = evaluate(adapter, ev, regime, chunk_size=config.eval.chunk_size)
            reports[regime] = report
            (out / f"report_{regime}.json").write_text(json.dumps(report.to_dict(), indent=2))
            files.append(f"report_{regime}.json")
            if config.eval.emit_instances and config.method == METHOD_NEO:
                _emit_instances(out / f"instances_{regime}.jsonl", adapter, ev)
                files.append(f"instances_{regime}.jsonl")
            _log(
                f"eval[{regime}] self={report.self_explainability:.3f} "
                f"transfer={report.transferability:.3f} n={report.n_instances}"
            )

        metrics_extra = {"score_kind": score_kind(config.domain)}
        first_regime = config.eval.regimes[0] if config.eval.regimes else "id"
        adapter = make_adapter(config, store, first_regime)
        if getattr(adapter, "n_codes", None) is not None:
            matrix = alignment_matrix(
                adapter,
                config.domain,
                n_probes=config.eval.n_probes,
                seed=config.seeds.eval,
                **config.domain_opts(),
            )
            with open(out / "alignment.csv", "w", newline="") as fh:
                csv.writer(fh).writerows(matrix.to_csv_rows())
            plots.alignment_heatmap(matrix, out / "alignment.png")
            files += ["alignment.csv", "alignment.png"]
            metrics_extra["primitiveness"] = primitiveness(
                adapter,
                config.domain,
                n_probes=config.eval.n_probes,
                seed=config.seeds.eval,
                **config.domain_opts(),
            )
        if "id" in reports and reports["id"].mean_explanation_length is not None:
            dataset_dir = store.dir_for("datasets", config.dataset_digest())
            ev_id, _, _ = read_dataset(dataset_dir / "eval_id.otib")
            metrics_extra["mean_explanation_length"] = reports["id"].mean_explanation_length
            metrics_extra["ground_truth_mean_length"] = ground_truth_mean_length(
                _subset(ev_id, config.eval.n_instances)
            )
        (out / "metrics.json").write_text(json.dumps(metrics_extra, indent=2))
        files.append("metrics.json")
        _write_table_csv(out / "summary.csv", config, reports)
        files.append("summary.csv")

        parents = {"datasets": config.dataset_digest()}
        if config.method != METHOD_STUB:
            parents["runs"] = config.run_digest()
        store.finalize(
            "evals",
            digest,
            config=asdict(config.eval),
            parents=parents,
            files=files,
            extra={
                "method": config.method,
                "domain": config.domain,
                "alpha": config.alpha,
                "name": config.name,
                "train_seed": config.seeds.train,
                "summary": {k: r.to_dict() for k, r in reports.items()},
                "metrics": metrics_extra,
                "elapsed_s": round(time.time() - t0, 2),
            },
        )
        _log(f"evals/{digest[:16]} written ({time.time() - t0:.1f}s)")
    return out


def _emit_instances(path: Path, adapter, ev) -> None:
    with open(path, "w") as fh:
        for start in range(0, len(ev), 256):
            stop = min(start + 256, len(ev))
            theories, records = adapter.induce(ev.xs[start:stop], ev.ys[start:stop], start)
            for i, rec in enumerate(records):
                row = {"instance": start + i, "truth": list(ev.truth_program(start + i).indices)}
                if rec is not None:
                    row.update(rec.to_json_dict())
                fh.write(json.dumps(row) + "\n")


def _write_table_csv(path: Path, config: ExperimentConfig, reports: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["domain", "alpha", "method", "regime", "score_kind", "self_ex", "transfer", "n"]
        )
        for regime, report in reports.items():
            writer.writerow(
                [
                    config.domain,
                    config.alpha,
                    config.method,
                    regime,
                    report.score_kind,
                    f"{report.self_explainability:.6f}",
                    f"{report.transferability:.6f}",
                    report.n_instances,
                ]
            )


# --- scale ----------------------------------------------------------------------


def cmd_scale(config: ExperimentConfig, store: ArtifactStore, force: bool = False) -> Path:
    if config.method != METHOD_NEO:
        raise ValueError(
            f"test-time scaling requires the theory model; {config.method} has no "
            "sampling structure"
        )
    if config.scale is None:
        raise ValueError("config has no scale section")
    digest = config.scale_digest()
    out = store.dir_for("scale", digest)
    with store.lock(digest):
        if store.is_complete("scale", digest) and not force:
            store.verify("scale", digest)
            return out
        cmd_train(config, store)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        regime = config.scale.regime
        dataset_dir = store.dir_for("datasets", config.dataset_digest())
        ev, _, _ = read_dataset(dataset_dir / f"eval_{regime}.otib")
        ev = _subset(ev, config.scale.n_instances)
        epsilon = (
            config.eval.epsilon
            if config.eval.epsilon is not None
            else DEFAULT_EPSILON[config.domain]
        )
        points = []
        per_instance: dict[tuple, list] = {}
        for temperature in config.scale.temperatures:
            for budget in config.scale.budgets:
                search = SearchConfig(
                    budget=budget,
                    temperature=temperature,
                    k_max=config.eval_k_max(regime),
                    epsilon=epsilon,
                    seed=_seed_int(config.seeds.eval, 0x5CA1E, budget, int(temperature * 1000)),
                )
                adapter = make_adapter(config, store, regime, search=search)
                report = evaluate(adapter, ev, regime, chunk_size=config.eval.chunk_size)
                points.append(
                    {
                        "budget": budget,
                        "temperature": temperature,
                        "self_explainability": report.self_explainability,
                        "transferability": report.transferability,
                        "search_failures": report.search_failures,
                        "n_instances": report.n_instances,
                    }
                )
                _log(
                    f"scale[B={budget}, T={temperature}] transfer={report.transferability:.3f}"
                )
        payload = {
            "regime": regime,
            "score_kind": score_kind(config.domain),
            "points": points,
        }
        (out / "scale.json").write_text(json.dumps(payload, indent=2))
        with open(out / "scale.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["budget", "temperature", "self_ex", "transfer", "failures"])
            for p in points:
                writer.writerow(
                    [
                        p["budget"],
                        p["temperature"],
                        f"{p['self_explainability']:.6f}",
                        f"{p['transferability']:.6f}",
                        p["search_failures"],
                    ]
                )
        plots.scaling_curve(payload, out / "scale.png")
        store.finalize(
            "scale",
            digest,
            config=asdict(config.scale),
            parents={"runs": config.run_digest(), "datasets": config.dataset_digest()},
            files=["scale.json", "scale.csv", "scale.png"],
            extra={"elapsed_s": round(time.time() - t0, 2)},
        )
        _log(f"scale/{digest[:16]} written ({time.time() - t0:.1f}s)")
    return out


# --- report -----------------------------------------------------------------------


def cmd_report(
    store: ArtifactStore, out_dir: Path | str, eval_digests: Optional[list[str]] = None
) -> Path:
    """Aggregate completed evaluations into tables and figures.

    Cells with several train seeds are averaged (the replication protocol
    reports three-run means).  Missing or incomplete runs are listed in the
    report warnings; partial output is allowed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    rows = []
    evals_root = store.root / "evals"
    candidates = (
        [evals_root / d[:16] for d in eval_digests]
        if eval_digests
        else sorted(evals_root.glob("*")) if evals_root.exists() else []
    )
    for directory in candidates:
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            warnings.append(f"missing or incomplete eval artifact: {directory.name}")
            continue
        manifest = json.loads(manifest_path.read_text())
        for regime, report in manifest.get("summary", {}).items():
            rows.append(
                {
                    "domain": manifest["domain"],
                    "alpha": manifest["alpha"],
                    "method": manifest["method"],
                    "seed": manifest.get("train_seed", 0),
                    "regime": regime,
                    "self_ex": report["self_explainability"],
                    "transfer": report["transferability"],
                    "score_kind": report["score_kind"],
                    "primitiveness": manifest.get("metrics", {}).get("primitiveness"),
                }
            )
    if not rows:
        warnings.append("no completed evaluation artifacts found; report is empty")

    # seed-averaged cells, one row per (domain, alpha, method, regime)
    grouped: dict[tuple, list[dict]] = {}
    for row in rows:
        grouped.setdefault((row["domain"], row["alpha"], row["method"], row["regime"]), []).append(row)
    table_path = out_dir / "results_table.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "domain", "alpha", "method", "regime", "score_kind",
                "self_ex_mean", "transfer_mean", "n_seeds", "primitiveness_mean",
            ]
        )
        for key in sorted(grouped, key=lambda k: (k[0], k[1], k[2], k[3])):
            cell = grouped[key]
            prim = [r["primitiveness"] for r in cell if r["primitiveness"] is not None]
            writer.writerow(
                [
                    key[0], key[1], key[2], key[3], cell[0]["score_kind"],
                    f"{np.mean([r['self_ex'] for r in cell]):.6f}",
                    f"{np.mean([r['transfer'] for r in cell]):.6f}",
                    len(cell),
                    f"{np.mean(prim):.6f}" if prim else "",
                ]
            )

    # figures from any completed scale sweeps and training logs
    scale_root = store.root / "scale"
    for directory in sorted(scale_root.glob("*")) if scale_root.exists() else []:
        payload_path = directory / "scale.json"
        if payload_path.exists():
            payload = json.loads(payload_path.read_text())
            plots.scaling_curve(payload, out_dir / f"scaling_{directory.name}.png")
    runs_root = store.root / "runs"
    for directory in sorted(runs_root.glob("*")) if runs_root.exists() else []:
        log_path = directory / "train_log.jsonl"
        if log_path.exists():
            records = [json.loads(line) for line in log_path.read_text().splitlines()]
            if records and "mean_selected_length" in records[0]:
                plots.explanation_length_curve(records, out_dir / f"length_{directory.name}.png")
    for directory in sorted((store.root / "evals").glob("*")) if (store.root / "evals").exists() else []:
        png = directory / "alignment.png"
        if png.exists():
            (out_dir / f"alignment_{directory.name}.png").write_bytes(png.read_bytes())

    (out_dir / "report.json").write_text(
        json.dumps({"rows": rows, "warnings": warnings}, indent=2)
    )
    if warnings:
        for w in warnings:
            _log(f"report warning: {w}")
    _log(f"report written to {out_dir}")
    return out_dir
