import json

import pytest

from actiongraphpy import __version__
from actiongraphpy.cli import main
from actiongraphpy.fileops import read_bench_csv, read_manifest
from actiongraphpy.paths import heatmap_file

QUIET = ["--log-level", "ERROR"]

SMALL = """\
env:
  game: topk
  N: 4
  K: 2
agent:
  hidden_dim: 8
  num_layers: 1
  num_heads: 2
train:
  episodes: 40
  batch_size: 8
  buffer_capacity: 100
  target_update_interval: 10
  eval_interval: 20
  eval_episodes: 20
experiment:
  methods: [AGP_Q, VDN]
  seeds: [0]
  heatmaps: true
  heatmap_batch: 10
  output_dir: {out}
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL.format(out=tmp_path / "out"))
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_verify_command(capsys):
    assert main(QUIET + ["verify"]) == 0
    assert "PASS parity_delta: parity interaction" in capsys.readouterr().out


def test_verify_json(capsys):
    assert main(QUIET + ["verify", "--json", "--op", "closed_form_kl", "--op", "parity_delta"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert set(data["ops"]) == {"closed_form_kl", "parity_delta"}


def test_train_then_heatmap(small_config, tmp_path, capsys):
    assert main(QUIET + ["train", str(small_config), "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "AGP_Q" in out and "VDN" in out
    root = tmp_path / "out"
    manifest = read_manifest(root / "manifest.json")
    assert manifest["success"] is True and len(manifest["cells"]) == 2

    folder = tmp_path / "maps"
    checkpoint = root / "AGP_Q" / "0" / "checkpoint.agp"
    assert main(QUIET + ["heatmap", str(checkpoint), str(small_config), "--out", str(folder), "--batch", "5"]) == 0
    assert "cross_agent_mass" in capsys.readouterr().out
    assert heatmap_file(folder, 0, None).exists() and heatmap_file(folder, 0, 1).exists()


def test_heatmap_on_graphless_checkpoint_fails(small_config, tmp_path, capsys):
    assert main(QUIET + ["train", str(small_config), "--quiet"]) == 0
    checkpoint = tmp_path / "out" / "VDN" / "0" / "checkpoint.agp"
    assert main(QUIET + ["heatmap", str(checkpoint), str(small_config)]) == 2
    assert "no action graph" in capsys.readouterr().err


def test_bad_config_exits_two(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("N: 6\nK: 9\n")
    assert main(QUIET + ["train", str(path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "K <= N" in err


def test_bench_command(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    args = ["bench", "--agents", "2", "4", "--actions", "2", "--reps", "2", "--hidden-dim", "8",
            "--num-layers", "1", "--num-heads", "2", "--out", str(out)]
    assert main(QUIET + args) == 0
    assert [r.num_nodes for r in read_bench_csv(out)] == [4, 8]
    assert main(QUIET + ["bench", "--reps", "0", "--out", str(out)]) == 2
