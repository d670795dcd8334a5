"""Mixed-precision bit-width search driven by the accuracy-gated index.

The genetic algorithm follows the classic elitist loop: evaluate, sort,
carry the top ``elite_k`` over unchanged, then fill the population with
children of roulette-selected parents (uniform crossover, optional
single-locus mutation). :func:`exhaustive_search` enumerates the whole
manifold and serves as an oracle for small layer counts.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, EvaluationError, SearchSpaceTooLarge
from .metrics import MetricPoint, refined_index

log = logging.getLogger(__name__)

ALLELES = (16, 8, 4, 2)
MAX_EXHAUSTIVE = 65536

Genome = tuple


class Evaluation(NamedTuple):
    accuracy_p: float
    latency_t_ms: float


Evaluator = Callable[[Genome], Evaluation]


def genome_label(genome: Sequence[int]) -> str:
    return "-".join(str(b) for b in genome)


def parse_genome(text: str) -> Genome:
    return tuple(int(part) for part in text.split("-"))


def geometric_compression(genome: Sequence[int]) -> float:
    return 32.0 / (sum(genome) / len(genome))


def mean_bits(genome: Sequence[int]) -> float:
    return sum(genome) / len(genome)


@dataclass(frozen=True)
class GaParams:
    population_n: int = 20
    generations_g: int = 30
    mutation_mu: float = 0.15
    elite_k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.population_n <= 0 or self.generations_g < 0:
            raise DomainError("population must be positive and generations nonnegative")
        if not 0 <= self.elite_k < self.population_n:
            raise DomainError("elite_k must lie in [0, population_n)")
        if not 0.0 <= self.mutation_mu <= 1.0:
            raise DomainError("mutation probability must lie in [0, 1]")


class FitnessFunction:
    """Memoized gated-index fitness with geometric compression.

    Each distinct genome is evaluated once per instance, so the landscape is
    static for the lifetime of a search and repeated lookups are identical.
    """

    def __init__(self, evaluator: Evaluator, thresh: float):
        self.evaluator = evaluator
        self.thresh = thresh
        self.points: dict[Genome, MetricPoint] = {}
        self.scores: dict[Genome, float] = {}
        self.order: list[Genome] = []

    def point(self, genome: Sequence[int]) -> MetricPoint:
        genome = tuple(genome)
        if genome not in self.points:
            try:
                p, t = self.evaluator(genome)
                point = MetricPoint(genome_label(genome), p, geometric_compression(genome), t)
            except EvaluationError:
                raise
            except Exception as exc:
                raise EvaluationError(genome, exc) from exc
            self.points[genome] = point
            self.scores[genome] = refined_index(point, self.thresh)
            self.order.append(genome)
        return self.points[genome]

    def __call__(self, genome: Sequence[int]) -> float:
        genome = tuple(genome)
        self.point(genome)
        return self.scores[genome]

    @property
    def evaluations(self) -> int:
        return len(self.order)


def _as_fitness(evaluator, thresh) -> FitnessFunction:
    if isinstance(evaluator, FitnessFunction):
        if thresh is not None and thresh != evaluator.thresh:
            raise DomainError("threshold differs from the one bound to the fitness function")
        return evaluator
    if thresh is None:
        raise DomainError("a threshold is required")
    return FitnessFunction(evaluator, thresh)


def fitness(genome: Sequence[int], evaluator: Evaluator, thresh: float) -> float:
    """One-off (unmemoized) fitness of a genome."""
    return FitnessFunction(evaluator, thresh)(genome)


@dataclass
class SearchState:
    generation: int = 0
    population: list = field(default_factory=list)
    fitness_buffer: list = field(default_factory=list)  # (genome, fitness) for the current population
    best_genome: Genome | None = None
    best_fitness: float = -1.0
    log: list = field(default_factory=list)

    def record(self, generation, population, scores, elites, stage="generation"):
        self.generation = generation
        self.population = list(population)
        self.fitness_buffer = list(zip(population, scores))
        for genome, score in self.fitness_buffer:
            if score > self.best_fitness or (
                score == self.best_fitness and mean_bits(genome) > mean_bits(self.best_genome)
            ):
                self.best_genome, self.best_fitness = genome, score
        self.log.append({
            "stage": stage,
            "generation": generation,
            "population": [genome_label(g) for g in population],
            "fitness": list(scores),
            "elites": [genome_label(g) for g in elites],
            "best_so_far": genome_label(self.best_genome),
            "best_so_far_fitness": self.best_fitness,
        })

    @property
    def best_history(self) -> list[float]:
        return [entry["best_so_far_fitness"] for entry in self.log]

    def to_json(self) -> dict:
        return {
            "generations": self.generation,
            "best_genome": genome_label(self.best_genome) if self.best_genome else None,
            "best_fitness": self.best_fitness,
            "log": self.log,
        }


def _argmax(population, scores) -> int:
    """Highest fitness; ties go to higher mean bit-width, then earlier index."""
    return max(range(len(population)), key=lambda i: (scores[i], mean_bits(population[i]), -i))


def run_ga(
    params: GaParams,
    evaluator,
    thresh: float | None = None,
    num_layers: int = 4,
    alleles: Sequence[int] = ALLELES,
) -> tuple[Genome, SearchState]:
    """Search ``alleles ** num_layers`` for the genome maximizing the gated index.

    ``evaluator`` maps a genome to ``(accuracy, latency_ms)``; passing a
    :class:`FitnessFunction` instead shares its memo table with the caller.
    When every genome in a generation scores zero, parents are drawn
    uniformly instead of by roulette.
    """
    alleles = tuple(alleles)
    if not alleles or num_layers <= 0:
        raise DomainError("need a nonempty allele set and at least one layer")
    score = _as_fitness(evaluator, thresh)
    rng = np.random.default_rng(params.seed)
    n, k, L = params.population_n, params.elite_k, num_layers

    population = [tuple(alleles[j] for j in rng.integers(len(alleles), size=L)) for _ in range(n)]
    state = SearchState()
    for generation in range(1, params.generations_g + 1):
        scores = [score(c) for c in population]
        order = sorted(range(n), key=lambda i: -scores[i])
        elites = [population[i] for i in order[:k]]
        state.record(generation, population, scores, elites)

        total = float(sum(scores))
        probs = np.asarray(scores) / total if total > 0 else np.full(n, 1.0 / n)
        nxt = list(elites)
        while len(nxt) < n:
            i1, i2 = rng.choice(n, size=2, p=probs)
            take_first = rng.random(L) < 0.5
            child = tuple(a if m else b for m, a, b in zip(take_first, population[i1], population[i2]))
            if rng.random() < params.mutation_mu:
                locus = int(rng.integers(L))
                allele = alleles[int(rng.integers(len(alleles)))]
                child = child[:locus] + (allele,) + child[locus + 1:]
            nxt.append(child)
        population = nxt
        log.debug("generation %d best %.4f", generation, state.best_fitness)

    scores = [score(c) for c in population]
    best = population[_argmax(population, scores)]
    state.record(params.generations_g, population, scores, [best], stage="final")
    return best, state


def exhaustive_search(
    num_layers: int,
    alleles: Sequence[int],
    evaluator,
    thresh: float | None = None,
    limit: int = MAX_EXHAUSTIVE,
) -> tuple[Genome, list[tuple[Genome, float]]]:
    """Evaluate every genome; ties on fitness go to the higher mean bit-width."""
    size = len(alleles) ** num_layers
    if size > limit:
        raise SearchSpaceTooLarge(f"{size} configurations exceed the enumeration limit {limit}")
    score = _as_fitness(evaluator, thresh)
    table = [(g, score(g)) for g in itertools.product(tuple(alleles), repeat=num_layers)]
    genomes = [g for g, _ in table]
    best = genomes[_argmax(genomes, [s for _, s in table])]
    return best, table


class SyntheticLandscape:
    """Seeded surrogate evaluator with per-layer quantization sensitivity.

    Accuracy drops by a layer-specific sensitivity times a per-bit-width
    penalty, plus a small deterministic per-genome jitter; latency grows
    mildly with bit-width. Used to test the search without a real model.
    """

    PENALTY = {32: 0.0, 16: 0.0, 8: 0.004, 4: 0.05, 2: 0.45}

    def __init__(self, seed: int = 0, num_layers: int = 4, fp_accuracy: float = 0.9, base_ms: float = 1.0):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.fp_accuracy = fp_accuracy
        self.base_ms = base_ms
        self.sensitivity = 10.0 ** rng.uniform(-2.0, 0.0, size=num_layers)
        self.cost = rng.uniform(0.01, 0.05, size=num_layers)
        self.calls = 0

    def __call__(self, genome: Sequence[int]) -> Evaluation:
        self.calls += 1
        jitter = np.random.default_rng([self.seed, *genome]).uniform(-0.005, 0.005)
        drop = sum(s * self.PENALTY[b] for s, b in zip(self.sensitivity, genome))
        p = float(np.clip(self.fp_accuracy - drop + jitter, 0.0, 1.0))
        t = self.base_ms + float(sum(c * b / 8 for c, b in zip(self.cost, genome)))
        return Evaluation(p, t)


class ModelEvaluator:
    """Evaluates a genome by quantizing a real network.

    Calibration ranges are computed once and shared by every genome; only
    the bit-widths change. Latency is either measured per genome with the
    bench harness or fixed (``latency_ms``) for latency-agnostic runs.
    """

    def __init__(self, net, weights, stats, eval_set, protocol=None, latency_batch=None, latency_ms=None):
        if protocol is None and latency_ms is None:
            raise DomainError("need a timing protocol or a fixed latency")
        self.net = net
        self.weights = weights
        self.stats = stats
        self.eval_set = eval_set
        self.protocol = protocol
        self.latency_batch = latency_batch
        self.latency_ms = latency_ms
        self.samples = {}

    def model(self, genome):
        from .quant import QuantConfig, apply_quantization

        return apply_quantization(self.net, self.weights, QuantConfig(tuple(genome)), self.stats)

    def __call__(self, genome: Sequence[int]) -> Evaluation:
        from .bench import measure_latency
        from .model.network import evaluate_model

        qm = self.model(genome)
        p = evaluate_model(qm, self.eval_set)
        if self.protocol is not None:
            sample = measure_latency(qm, self.protocol, self.latency_batch)
            self.samples[tuple(genome)] = sample
            t = sample.median_ms
        else:
            t = self.latency_ms
        return Evaluation(p, t)
