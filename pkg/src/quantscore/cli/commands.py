"""Experiment commands. Each returns a :class:`RunRecord` (or a report) and
leaves persistence of artifacts to the paths named in the config."""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

from ..bench import TimingProtocol, environment, measure_latency
from ..data import Dataset, load_mnist, sample_calibration
from ..errors import ConfigError
from ..metrics import MetricPoint, ThresholdSpec, resolve_threshold
from ..model import evaluate_accuracy, evaluate_model, load_weights, save_weights, simple_cnn, train_baseline
from ..quant import QuantConfig, apply_quantization, calibrate, compression_ratio
from ..search import ALLELES, FitnessFunction, ModelEvaluator, genome_label, run_ga
from .config import ExperimentConfig
from .records import RunRecord, knee, result_entry, summarize
from .verify import VerifyReport, fixture_records, verify_all

log = logging.getLogger(__name__)

SUBSET_SEED = 20240  # fixed draw for subsets, independent of experiment seeds
REFERENCE_KNEE = "4"


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def limit(dataset: Dataset, n: int | None) -> Dataset:
    """A fixed random subset of ``n`` samples (files are class-ordered, so no plain head)."""
    if n is None or n >= len(dataset):
        return dataset
    idx = np.random.default_rng(SUBSET_SEED).permutation(len(dataset))[:n]
    return dataset.subset(np.sort(idx))


def latency_batch(dataset: Dataset, protocol: TimingProtocol) -> np.ndarray:
    images = dataset.images
    if len(images) < protocol.batch_size:
        reps = -(-protocol.batch_size // len(images))
        images = np.concatenate([images] * reps)
    return np.ascontiguousarray(images[: protocol.batch_size])


def _threshold(cfg: ExperimentConfig, fp_accuracy: float) -> dict:
    spec = ThresholdSpec(cfg.dataset.num_classes, fp_accuracy, cfg.threshold.delta)
    return {
        "num_classes_k": spec.num_classes_k,
        "fp_accuracy": fp_accuracy,
        "delta": spec.delta,
        "value": resolve_threshold(spec),
    }


def _load_data(cfg: ExperimentConfig):
    data_dir = cfg.dataset.resolved_dir()
    train = limit(load_mnist(data_dir, "train"), cfg.dataset.train_limit)
    test = limit(load_mnist(data_dir, "test"), cfg.dataset.eval_limit)
    return train, test


def _load_model(cfg: ExperimentConfig):
    net = simple_cnn(num_classes=cfg.dataset.num_classes)
    return net, load_weights(cfg.model.weights, net)


def cmd_train(cfg: ExperimentConfig) -> RunRecord:
    cfg.validate(need_data=True)
    train, test = _load_data(cfg)
    net = simple_cnn(num_classes=cfg.dataset.num_classes)
    log.info("training on %d images for %d epochs", len(train), cfg.train.epochs)
    result = train_baseline(net, train, cfg.train)
    path = save_weights(result.weights, cfg.model.weights, net)
    accuracy = evaluate_accuracy(net, result.weights, test)
    log.info("test accuracy %.4f, weights written to %s", accuracy, path)
    return RunRecord(
        command="train",
        config=cfg.to_dict(),
        seeds=[cfg.train.seed],
        threshold=_threshold(cfg, accuracy),
        results=[],
        environment=environment(),
        artifacts={"weights": str(path), "weights_sha256": file_sha256(path)},
        extra={
            "test_accuracy": accuracy,
            "best_epoch": result.best_epoch,
            "best_val_accuracy": result.best_val_accuracy,
            "history": result.history,
        },
    )


def cmd_sweep(cfg: ExperimentConfig) -> RunRecord:
    """Uniform PTQ sweep: every seed x bit-width cell is calibrated, evaluated and timed.

    The seed selects the calibration draw. The threshold uses the mean
    full-precision accuracy of the run.
    """
    cfg.validate(need_data=True, need_weights=True)
    net, weights = _load_model(cfg)
    train, test = _load_data(cfg)
    protocol = cfg.timing.protocol()
    batch = latency_batch(test, protocol)
    n_layers = len(net.quantizable_indices)

    cells = []  # (seed, bits, P, T)
    for seed in cfg.seeds:
        stats = calibrate(net, weights, sample_calibration(train, cfg.calibration_size, seed))
        for bits in cfg.bits:
            model = apply_quantization(net, weights, QuantConfig.uniform(bits, n_layers), stats)
            p = evaluate_model(model, test)
            t = measure_latency(model, protocol, batch).median_ms
            log.info("seed %d bits %d: P=%.4f T=%.3f ms", seed, bits, p, t)
            cells.append((seed, bits, p, t))

    fp = [p for _, b, p, _ in cells if b == 32]
    fp_accuracy = float(np.mean(fp)) if fp else evaluate_accuracy(net, weights, test)
    threshold = _threshold(cfg, fp_accuracy)
    results = [
        result_entry(seed, MetricPoint(str(b), p, compression_ratio(QuantConfig.uniform(b, n_layers)), t), threshold["value"])
        for seed, b, p, t in cells
    ]
    best = knee(summarize(results))
    return RunRecord(
        command="sweep",
        config=cfg.to_dict(),
        seeds=list(cfg.seeds),
        threshold=threshold,
        results=results,
        environment=environment(),
        artifacts={"weights": cfg.model.weights, "weights_sha256": file_sha256(cfg.model.weights)},
        extra={
            "pareto_knee": best,
            "knee_matches_reference": best == REFERENCE_KNEE,
            "reference_knee": REFERENCE_KNEE,
            "eval_samples": len(test),
            "timing_protocol": cfg.timing.__dict__,
        },
    )


def cmd_search(cfg: ExperimentConfig) -> RunRecord:
    """GA mixed-precision search with the accuracy-gated index as fitness.

    Fitness uses a fixed evaluation subset; the winner and the uniform
    baselines are then re-scored on the full test set.
    """
    cfg.validate(need_data=True, need_weights=True)
    net, weights = _load_model(cfg)
    train, test = _load_data(cfg)
    subset = limit(test, cfg.search.eval_limit)
    params = cfg.ga.params()
    protocol = cfg.timing.protocol()
    batch = latency_batch(test, protocol)
    n_layers = len(net.quantizable_indices)

    stats = calibrate(net, weights, sample_calibration(train, cfg.calibration_size, params.seed))
    if cfg.search.latency == "measured":
        evaluator = ModelEvaluator(net, weights, stats, subset, protocol=protocol, latency_batch=batch)
    else:
        evaluator = ModelEvaluator(net, weights, stats, subset, latency_ms=cfg.search.fixed_latency_ms)
    fp_subset = evaluate_accuracy(net, weights, subset)
    fitness = FitnessFunction(evaluator, _threshold(cfg, fp_subset)["value"])

    best, state = run_ga(params, fitness, num_layers=n_layers, alleles=ALLELES)
    uniform = {genome_label((b,) * n_layers): fitness((b,) * n_layers) for b in ALLELES}
    best_uniform = max(uniform.values())
    log.info("best %s fitness %.4f; best uniform %.4f", genome_label(best), state.best_fitness, best_uniform)

    fp_full = evaluate_accuracy(net, weights, test)
    threshold = _threshold(cfg, fp_full)
    results = []
    for genome in [best] + [(b,) * n_layers for b in ALLELES if (b,) * n_layers != best]:
        model = apply_quantization(net, weights, QuantConfig(genome), stats)
        p = evaluate_model(model, test)
        t = fitness.point(genome).latency_t_ms
        c = compression_ratio(QuantConfig(genome), "geometric")
        results.append(result_entry(params.seed, MetricPoint(genome_label(genome), p, c, t), threshold["value"]))
    return RunRecord(
        command="search",
        config=cfg.to_dict(),
        seeds=[params.seed],
        threshold=threshold,
        results=results,
        environment=environment(),
        artifacts={"weights": cfg.model.weights, "weights_sha256": file_sha256(cfg.model.weights)},
        extra={
            "best_topology": genome_label(best),
            "best_fitness": fitness(best),
            "fitness_threshold": fitness.thresh,
            "uniform_fitness": uniform,
            "best_uniform_fitness": best_uniform,
            "strictly_better_than_uniform": fitness(best) > best_uniform,
            "evaluations": fitness.evaluations,
            "fitness_eval_samples": len(subset),
            "ga": state.to_json(),
        },
    )


def cmd_bench(cfg: ExperimentConfig) -> dict:
    """Latency of each uniform bit-width under the configured protocol."""
    cfg.validate(need_data=True, need_weights=True)
    net, weights = _load_model(cfg)
    train, test = _load_data(cfg)
    protocol = cfg.timing.protocol()
    batch = latency_batch(test, protocol)
    stats = calibrate(net, weights, sample_calibration(train, cfg.calibration_size, cfg.seeds[0]))
    n_layers = len(net.quantizable_indices)
    out = {}
    for bits in cfg.bits:
        model = apply_quantization(net, weights, QuantConfig.uniform(bits, n_layers), stats)
        out[str(bits)] = measure_latency(model, protocol, batch).to_json()
    return {"protocol": cfg.timing.__dict__, "latency": out}


def cmd_verify_paper(emit_dir=None) -> tuple[VerifyReport, list[Path]]:
    report = verify_all()
    written = []
    if emit_dir is not None:
        for record in fixture_records():
            written.append(record.save(Path(emit_dir) / f"{record.run_id}.json"))
    return report, written


def require_records(paths) -> None:
    if not paths:
        raise ConfigError("report needs at least one record path")
