import csv
import json

import numpy as np
import pytest

from cckit.cli import DatasetError, generate, load_dataset, main
from cckit.geometry import PointSet
from cckit.partitions import ConstraintSpec, evaluate


def dump(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def solve_json(args, capsys) -> tuple[dict, int]:
    code = main(["solve", *args])
    out = capsys.readouterr().out
    return json.loads(out), code


def test_two_plain_points(tmp_path):
    ds = load_dataset(dump(tmp_path, "p.json", {"points": [{"coords": [0, 1, 2]}, {"coords": [3, 4, 5]}]}))
    assert ds.points.n == 2 and ds.points.dim == 3
    assert ds.points.colors is None


def test_missing_color_names_the_record(tmp_path):
    doc = {"dim": 1, "points": [{"coords": [0], "color": "a"}, {"coords": [1], "color": "b"}, {"coords": [2]}]}
    with pytest.raises(DatasetError, match="point 2: missing color"):
        load_dataset(dump(tmp_path, "p.json", doc))


@pytest.mark.parametrize("rec,msg", [
    ({"coords": [0, 1]}, "point 1: expected 1 coordinates"),
    ({"coords": []}, "point 1: coords"),
    ({"coords": [0], "weight": -1}, "point 1: weight"),
    ({"coords": [0], "prior": 0}, "point 1: prior"),
])
def test_bad_records(tmp_path, rec, msg):
    first = {"coords": [5], **{k: 1 for k in ("weight", "prior") if k in rec}}
    with pytest.raises(DatasetError, match=msg):
        load_dataset(dump(tmp_path, "p.json", {"points": [first, rec]}))


def test_probabilities_over_one(tmp_path):
    doc = {"nodes": [
        {"realizations": [{"coords": [0], "prob": 0.5}]},
        {"realizations": [{"coords": [1], "prob": 0.7}, {"coords": [2], "prob": 0.4}]},
    ]}
    with pytest.raises(DatasetError, match="node 1: probabilities sum to 1.1 > 1"):
        load_dataset(dump(tmp_path, "n.json", doc))


def test_nodes_become_weighted_groups(tmp_path):
    doc = {"nodes": [{"realizations": [{"coords": [0, 0], "prob": 0.25}, {"coords": [1, 0], "prob": 0.75}]},
                     {"realizations": [{"coords": [5, 5], "prob": 1}]}]}
    P = load_dataset(dump(tmp_path, "n.json", doc)).points
    assert P.w.tolist() == [0.25, 0.75, 1.0]
    assert P.groups.tolist() == [0, 0, 1]


def test_csv_with_header_and_colors(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y,color\n0,0,red\n1,1,blue\n2,2,red\n", encoding="utf-8")
    ds = load_dataset(str(path))
    assert ds.points.coords.tolist() == [[0, 0], [1, 1], [2, 2]]
    assert ds.points.colors[0] == ds.points.colors[2] != ds.points.colors[1]


def test_unreadable_json_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{", encoding="utf-8")
    assert main(["solve", "--input", str(path), "--k", "2"]) == 1
    assert "invalid JSON" in capsys.readouterr().err


@pytest.fixture
def blobs(tmp_path):
    return dump(tmp_path, "g.json", generate(10, 2, 2, 5.0, seed=3, colors="round_robin"))


def test_same_seed_same_report(blobs, capsys):
    args = ["--input", blobs, "--k", "2", "--constraint", "r_gather", "--r", "3", "--seed", "4", "--repeats", "2"]
    a, ca = solve_json(args, capsys)
    b, cb = solve_json(args, capsys)
    assert ca == cb == 0
    a.pop("wall_clock_s")
    b.pop("wall_clock_s")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert len(a["runs"]) == 2


def test_report_objective_recomputes(blobs, capsys):
    rep, code = solve_json(["--input", blobs, "--k", "2", "--constraint", "l_diversity", "--l", "2"], capsys)
    assert code == 0 and rep["feasible"]
    P = load_dataset(blobs).points
    labels = np.array(rep["assignment"]) - 1
    got = evaluate(P, labels, np.array(rep["centers"]), ConstraintSpec("l_diversity", l=2))
    assert got == pytest.approx(rep["objective"], rel=1e-12)
    assert sum(rep["search"]["candidates_per_guess"]) >= 1
    assert len(rep["search"]["guesses"]) == len(rep["search"]["candidates_per_guess"])


@pytest.mark.parametrize("constraint", [["unconstrained"], ["r_capacity", "--r", "6"]])
def test_oracle_ratio_at_least_one(blobs, capsys, constraint):
    rep, code = solve_json(["--input", blobs, "--k", "2", "--oracle", "--constraint", *constraint], capsys)
    assert code == 0
    assert rep["oracle"]["ratio"] >= 1.0 - 1e-12


def test_infeasible_gather_exits_2(blobs, capsys):
    rep, code = solve_json(["--input", blobs, "--k", "2", "--constraint", "r_gather", "--r", "6"], capsys)
    assert code == 2
    assert rep["feasible"] is False


def test_faithful_refused_without_force(blobs, capsys):
    assert main(["solve", "--input", blobs, "--k", "2", "--preset", "faithful", "--eps", "0.1"]) == 1
    assert "faithful sample size" in capsys.readouterr().err


def test_table_rows(blobs, tmp_path, capsys):
    table = tmp_path / "runs.csv"
    rep, code = solve_json(["--input", blobs, "--k", "2", "--repeats", "3", "--oracle", "--table", str(table)],
                           capsys)
    rows = list(csv.DictReader(table.open(encoding="utf-8")))
    assert [int(r["seed"]) for r in rows] == [r["seed"] for r in rep["runs"]]
    assert all(float(r["ratio"]) >= 1.0 - 1e-12 and float(r["runtime_s"]) >= 0 for r in rows)


def test_oracle_verb(blobs, tmp_path):
    out = tmp_path / "o.json"
    assert main(["oracle", "--input", blobs, "--k", "2", "--output", str(out)]) == 0
    rep = json.loads(out.read_text(encoding="utf-8"))
    assert sorted(set(rep["assignment"])) == [1, 2]


def test_gen_shape_and_colors():
    doc = generate(12, 3, 4, 5.0, seed=0, colors="by_cluster", n_colors=3)
    assert len(doc["points"]) == 12 and doc["dim"] == 4
    assert np.allclose(np.linalg.norm(doc["centers"], axis=1).max(), 5.0)
    assert {p["color"] for p in doc["points"]} == {"c0", "c1", "c2"}
    assert doc["truth"][:3] == [1, 2, 3]
    P = PointSet(np.array([p["coords"] for p in doc["points"]]))
    assert P.n == 12


def test_validate_verb(blobs, tmp_path, capsys):
    good = dump(tmp_path, "a.json", {"assignment": [1, 2] * 5})
    bad = dump(tmp_path, "b.json", {"assignment": [1] * 9 + [2]})
    args = ["validate", "--input", blobs, "--k", "2", "--constraint", "r_gather", "--r", "3"]
    assert main([*args, "--assignment", good]) == 0
    assert json.loads(capsys.readouterr().out) == {"valid": True}
    assert main([*args, "--assignment", bad]) == 2
    assert json.loads(capsys.readouterr().out) == {"valid": False}


def test_uncertain_means_adds_spread(tmp_path, capsys):
    doc = {"nodes": [{"realizations": [{"coords": [0.0], "prob": 0.5}, {"coords": [2.0], "prob": 0.5}]},
                     {"realizations": [{"coords": [10.0], "prob": 1.0}]}]}
    path = dump(tmp_path, "u.json", doc)
    rep, code = solve_json(["--input", path, "--k", "2", "--constraint", "uncertain_means"], capsys)
    assert code == 0
    # each node becomes its own center; only the spread of node 0 is left
    assert rep["objective"] == pytest.approx(rep["within_node_spread"])
    assert rep["within_node_spread"] > 0
