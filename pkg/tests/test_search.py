import itertools

import pytest

from quantscore.errors import DomainError, EvaluationError, SearchSpaceTooLarge
from quantscore.search import (
    ALLELES,
    Evaluation,
    FitnessFunction,
    GaParams,
    SyntheticLandscape,
    exhaustive_search,
    fitness,
    genome_label,
    geometric_compression,
    parse_genome,
    run_ga,
)


def test_labels():
    assert genome_label((8, 8, 8, 4)) == "8-8-8-4"
    assert parse_genome("8-8-8-4") == (8, 8, 8, 4)
    assert geometric_compression((8, 8, 8, 4)) == pytest.approx(32 / 7)


def test_params_validation():
    with pytest.raises(DomainError):
        GaParams(population_n=5, elite_k=5)
    with pytest.raises(DomainError):
        GaParams(mutation_mu=1.5)
    with pytest.raises(DomainError):
        GaParams(generations_g=-1)


def test_fitness_is_gated_index():
    ev = lambda g: Evaluation(0.9, 1.0)
    assert fitness((4, 4, 4, 4), ev, 0.5) == pytest.approx(8 * 0.4)
    assert fitness((4, 4, 4, 4), ev, 0.95) == 0.0


def test_memoization():
    land = SyntheticLandscape(seed=0)
    ff = FitnessFunction(land, 0.5)
    ff((4, 4, 4, 4))
    ff((4, 4, 4, 4))
    assert land.calls == 1 and ff.evaluations == 1


def test_evaluator_failure_names_genome():
    def broken(genome):
        raise RuntimeError("boom")

    with pytest.raises(EvaluationError, match="8-4-2-16") as info:
        fitness((8, 4, 2, 16), broken, 0.5)
    assert info.value.genome == (8, 4, 2, 16)


def test_exhaustive_enumerates_everything():
    best, table = exhaustive_search(2, (8, 4), lambda g: Evaluation(0.9, 1.0), 0.5)
    assert [g for g, _ in table] == list(itertools.product((8, 4), repeat=2))
    assert best == (4, 4)


def test_exhaustive_tie_goes_to_more_bits():
    best, _ = exhaustive_search(2, (8, 4), lambda g: Evaluation(0.9, 1.0), 0.95)  # all zero
    assert best == (8, 8)


def test_exhaustive_guard():
    with pytest.raises(SearchSpaceTooLarge):
        exhaustive_search(9, ALLELES, lambda g: Evaluation(0.9, 1.0), 0.5)


def test_zero_generations_returns_best_initial_genome():
    land = SyntheticLandscape(seed=1)
    ff = FitnessFunction(land, 0.5)
    best, state = run_ga(GaParams(generations_g=0, seed=3), ff)
    initial = state.log[-1]
    assert initial["stage"] == "final"
    assert ff(best) == max(initial["fitness"])


def test_ga_is_deterministic():
    runs = [run_ga(GaParams(seed=5), SyntheticLandscape(seed=2), 0.5) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert runs[0][1].log == runs[1][1].log


def test_all_zero_fitness_falls_back_to_uniform_selection():
    best, state = run_ga(GaParams(generations_g=3, seed=0), lambda g: Evaluation(0.1, 1.0), 0.5)
    assert state.best_fitness == 0.0
    assert best in [parse_genome(g) for g in state.log[-1]["population"]]


def test_elites_survive():
    land = SyntheticLandscape(seed=4)
    _, state = run_ga(GaParams(seed=1), land, 0.5)
    for prev, nxt in zip(state.log, state.log[1:]):
        assert set(prev["elites"]) <= set(nxt["population"])


@pytest.mark.parametrize("landscape_seed", range(4))
def test_ga_matches_oracle_on_surrogates(landscape_seed):
    ff = FitnessFunction(SyntheticLandscape(seed=landscape_seed), 0.5)
    optimum, _ = exhaustive_search(4, ALLELES, ff)
    hits = 0
    for seed in range(20):
        best, state = run_ga(GaParams(seed=seed), ff)
        hits += best == optimum
        history = state.best_history
        assert all(a <= b for a, b in zip(history, history[1:]))
    assert hits >= 19
