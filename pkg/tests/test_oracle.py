import json

import pytest

from common.errors import FormatError
from evaluation.oracle import evaluation_budget, oracle_comparison
from evaluation.performance_comparison import evaluation_budget_table
from games.neighbor_graph import NeighborGraph
from games.shapley_engine import SamplerConfig
from games.synthetic_games import (
    additive_game,
    game_from_dict,
    grid_edge_game,
    load_game_file,
    ring_edge_game,
)


def test_game_from_dict_kinds():
    game, graph = game_from_dict({"n": 3, "kind": "additive", "weights": [1, 2, 3]})
    assert game.evaluate([0, 2]) == 4.0
    assert graph.edge_count() == 3

    game, graph = game_from_dict({"n": 3, "kind": "edges", "edges": [[0, 1], [1, 2]]})
    assert game.evaluate([0, 1, 2]) == 2.0
    assert graph.neighbors(1) == [0, 2]

    game, _ = game_from_dict({"n": 2, "kind": "table", "table": {"": 0, "0": 1, "0,1": 3}})
    assert game.evaluate([0, 1]) == 3.0
    assert game.evaluate([1]) == 0.0


def test_explicit_graph_overrides_default():
    _, graph = game_from_dict({"n": 4, "kind": "additive", "weights": [0, 0, 0, 0], "graph": [[0, 3]]})
    assert graph.edge_count() == 1


@pytest.mark.parametrize("definition", [
    {"kind": "additive"},
    {"n": 2, "kind": "mystery"},
    {"n": 2, "kind": "additive", "weights": [1.0]},
    {"n": 2, "kind": "table", "table": {"0,5": 1.0}},
    {"n": 2, "kind": "edges", "edges": [[0, 1]], "weights": [1.0, 2.0]},
])
def test_bad_game_definitions(definition):
    with pytest.raises(FormatError):
        game_from_dict(definition)


def test_load_game_file(tmp_path):
    path = tmp_path / "ring.json"
    path.write_text(json.dumps({"n": 4, "kind": "edges", "edges": [[0, 1], [1, 2], [2, 3], [3, 0]]}))
    game, graph = load_game_file(path)
    assert game.name == "ring"
    assert game.player_count == 4

    with pytest.raises(FileNotFoundError):
        load_game_file(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(FormatError):
        load_game_file(tmp_path / "broken.json")


def test_oracle_passes_on_additive_game():
    weights = [0.5, -1.0, 2.0, 0.0, 3.5]
    report = oracle_comparison(additive_game(weights), NeighborGraph.ring(5),
                               SamplerConfig(k=1, M=2, seed=0), kind="additive", permutations=50)
    assert report["status"] == "PASS"
    assert set(report["checks"]) == {"evaluation_budget", "exact_efficiency", "additive_agreement"}
    assert [row["cone_shap"] for row in report["players"]] == pytest.approx(weights, abs=1e-9)


def test_oracle_checks_locality_on_edge_game():
    game, graph = ring_edge_game(8)
    report = oracle_comparison(game, graph, SamplerConfig(k=2, M=1), kind="edges", permutations=100)
    assert report["checks"]["locality_exactness"] == "PASS"
    assert report["max_abs_error"]["neighbor_max_abs_error"] <= 1e-9
    assert all(row["evals"] <= evaluation_budget(2, 1) for row in report["players"])


def test_oracle_report_is_json_serializable():
    game, graph = grid_edge_game(2, 3)
    report = oracle_comparison(game, graph, SamplerConfig(k=1, M=2), kind="edges", permutations=10)
    json.dumps(report)


def test_budget_table_within_bound():
    game, _ = grid_edge_game(2, 3)
    table = evaluation_budget_table(game, NeighborGraph.complete(6), ks=(1, 2), Ms=(1, 2))
    assert len(table) == 4
    assert table["within_bound"].all()
    assert list(table["bound"]) == [4, 8, 8, 16]
