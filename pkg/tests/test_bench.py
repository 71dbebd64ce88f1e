import pytest

from actiongraphpy.bench import bench_complexity, complexity_units
from actiongraphpy.exceptions import BenchmarkError
from actiongraphpy.fileops import read_bench_csv
from actiongraphpy.utils import metrics_collector


def test_complexity_units():
    assert complexity_units(6, 2) == 2 * 4 * 144 * 64
    assert complexity_units(4, 2, 1, 2, 8) == 1 * 2 * 64 * 8
    assert complexity_units(8, 2) == 4 * complexity_units(4, 2)


def test_bench_rows_and_csv(tmp_path):
    metrics = metrics_collector()
    path = tmp_path / "bench.csv"
    rows = bench_complexity([2, 4], [2, 3], 3, hidden_dim=8, num_layers=1, num_heads=2, path=path, metrics=metrics)
    assert [(r.num_agents, r.num_actions, r.num_nodes) for r in rows] == [(2, 2, 4), (2, 3, 6), (4, 2, 8), (4, 3, 12)]
    assert all(r.mean_us > 0 for r in rows)
    assert rows[-1].complexity_units == complexity_units(4, 3, 1, 2, 8)
    assert read_bench_csv(path) == rows
    assert metrics.summary()["passes"] == 12
    assert metrics.summary()["forward/N4A3"]["count"] == 3


@pytest.mark.parametrize("agents,actions,reps", [([2], [2], 0), ([], [2], 1), ([2], [0], 1)])
def test_bench_rejects_bad_arguments(agents, actions, reps):
    with pytest.raises(BenchmarkError):
        bench_complexity(agents, actions, reps)
