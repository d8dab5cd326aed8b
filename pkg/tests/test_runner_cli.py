"""End-to-end CLI and runner behavior: exit codes, outputs, determinism."""

import hashlib
import json
import os

import pytest

from rslab.cli import main
from rslab.manifest import config_digest, file_sha256
from rslab.runner import EXIT_CONFIG, EXIT_INTEGRITY, EXIT_IO, EXIT_OK, run
from rslab import load_config

TREE_MODEL = {
    "topology": {"kind": "tree", "branching": 2, "depth": 7},
    "dist": {"kind": "uniform", "a": -1.0, "b": 1.0},
    "lambda": 0.3,
    "seed": 5,
}
BOX_MODEL = {
    "topology": {"kind": "box", "dims": [4, 4]},
    "dist": {"kind": "uniform", "a": -1.0, "b": 1.0},
    "lambda": 0.5,
    "seed": 3,
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_outputs(out_dir, command):
    csv_path = os.path.join(out_dir, f"{command}.csv")
    json_path = os.path.join(out_dir, f"{command}.summary.json")
    man_path = os.path.join(out_dir, "manifest.json")
    with open(csv_path) as fh:
        csv_lines = fh.read().splitlines()
    with open(json_path) as fh:
        summary = json.load(fh)
    with open(man_path) as fh:
        manifest = json.load(fh)
    return csv_lines, summary, manifest


# ----------------------------------------------------------- error handling


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate", "--config", "nowhere.json"]) == EXIT_CONFIG


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


def test_missing_config_file_is_io_error(tmp_path, capsys):
    code = main(["green", "--config", str(tmp_path / "absent.json")])
    assert code == EXIT_IO
    assert "cannot read config" in capsys.readouterr().err


def test_config_error_names_field_path(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "command": "gamma-scan", "model": TREE_MODEL,
        "ladder": {"eta0": -0.5},
        "params": {"energies": [0.0], "replicates": 2, "chunk": 2},
    })
    assert main(["gamma-scan", "--config", cfg]) == EXIT_CONFIG
    assert "ladder.eta0" in capsys.readouterr().err


def test_config_suggests_near_miss_key(tmp_path, capsys):
    model = dict(BOX_MODEL)
    del model["topology"]
    bad = {"topology": {"kind": "box", "dims": [4, 4]},
           "dist": BOX_MODEL["dist"], "lamda": 0.5, "seed": 3}
    cfg = write_config(tmp_path, {
        "command": "green", "model": bad,
        "params": {"x": 0, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    })
    assert main(["green", "--config", cfg]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "lamda" in err and "did you mean 'lambda'" in err


def test_tree_only_command_rejects_box(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "command": "lyapunov", "model": BOX_MODEL,
        "params": {"energies": [0.0], "d_window": [2, 5], "replicates": 4},
    })
    assert main(["lyapunov", "--config", cfg]) == EXIT_CONFIG
    assert "tree" in capsys.readouterr().err


def test_cli_config_command_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "command": "green", "model": BOX_MODEL,
        "params": {"x": 0, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    })
    assert main(["dos", "--config", cfg]) == EXIT_CONFIG
    assert "does not match" in capsys.readouterr().err


def test_bad_worker_count(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "command": "green", "model": BOX_MODEL,
        "params": {"x": 0, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    })
    assert main(["green", "--config", cfg, "--workers", "0"]) == EXIT_CONFIG


def test_unwritable_output_is_io_error(tmp_path):
    cfg = load_config(write_config(tmp_path, {
        "command": "green", "model": BOX_MODEL,
        "params": {"x": 0, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    }))
    blocker = tmp_path / "not-a-dir"
    blocker.write_text("occupied")
    code, manifest = run(cfg, out_dir=str(blocker))
    assert code == EXIT_IO
    assert manifest is None


# -------------------------------------------------------------- happy paths


def test_green_outputs(tmp_path):
    cfg = write_config(tmp_path, {
        "command": "green", "model": BOX_MODEL, "output_dir": str(tmp_path / "out"),
        "params": {"x": 0, "y": 5, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    })
    assert main(["green", "--config", cfg]) == EXIT_OK
    csv_lines, summary, manifest = read_outputs(str(tmp_path / "out"), "green")
    assert csv_lines[0] == "vertex,distance,re_g,im_g,abs_g"
    assert len(csv_lines) == 1 + 16
    assert summary["command"] == "green"
    assert "pair" in summary and summary["pair"]["y"] == 5
    assert summary["residual"] <= 1e-10
    # manifest hashes every output file and is self-consistent
    out = str(tmp_path / "out")
    for rec in manifest["outputs"]:
        assert rec["sha256"] == file_sha256(os.path.join(out, rec["file"]))
        assert rec["bytes"] == os.path.getsize(os.path.join(out, rec["file"]))
    assert manifest["status"] in ("ok", "warnings")
    assert manifest["config_digest"] == summary["config_digest"]


def test_dos_outputs_and_row_count(tmp_path):
    doc = {
        "command": "dos", "model": BOX_MODEL,
        "params": {"energies": {"lo": -3.0, "hi": 3.0, "count": 5},
                   "replicates": 32, "chunk": 8},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["dos", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    csv_lines, summary, _ = read_outputs(str(tmp_path / "o"), "dos")
    assert csv_lines[0] == "E,n_hat,stderr,wegner_bound"
    assert len(csv_lines) == 1 + 5
    assert summary["wegner_bound"] == pytest.approx(1.0)  # (1/2)/0.5


def test_gamma_scan_outputs(tmp_path):
    doc = {
        "command": "gamma-scan", "model": TREE_MODEL,
        "ladder": {"eta0": 0.1, "rungs": 6},
        "params": {"energies": [0.0, 1.0], "replicates": 5, "chunk": 4},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["gamma-scan", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    csv_lines, summary, _ = read_outputs(str(tmp_path / "o"), "gamma-scan")
    assert csv_lines[0] == "E,eta,gamma,kappa,imG,verdict,replicate"
    assert len(csv_lines) == 1 + 2 * 5 * 6
    assert len(summary["per_energy"]) == 2


def test_resonance_outputs(tmp_path):
    doc = {
        "command": "resonance", "model": {**TREE_MODEL, "lambda": 0.2},
        "params": {"energy": 0.0, "radii": [3, 4], "replicates": 24,
                   "calibration_replicates": 16, "dos_replicates": 40, "chunk": 8},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["resonance", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    csv_lines, summary, _ = read_outputs(str(tmp_path / "o"), "resonance")
    assert csv_lines[0] == "replicate,R,N_R"
    assert len(csv_lines) == 1 + 24 * 2
    assert len(summary["per_radius"]) == 2


def test_lyapunov_outputs(tmp_path):
    doc = {
        "command": "lyapunov",
        "model": dict(TREE_MODEL, topology={"kind": "tree", "branching": 2, "depth": 10}),
        "params": {"energies": [0.0, 1.0], "d_window": [4, 8],
                   "replicates": 8, "chunk": 4},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["lyapunov", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    csv_lines, summary, _ = read_outputs(str(tmp_path / "o"), "lyapunov")
    assert csv_lines[0] == "E,L0,L0_err,L1,L1_err,r2_L0,r2_L1,flagged"
    assert len(csv_lines) == 1 + 2
    assert summary["d_window"] == [4, 8]


def test_phase_scan_outputs(tmp_path):
    doc = {
        "command": "phase-scan",
        "model": dict(TREE_MODEL, topology={"kind": "tree", "branching": 2, "depth": 10}),
        "params": {"energies": [0.0], "lambdas": [0.2, 1.0], "d_window": [4, 8],
                   "replicates": 6, "chunk": 4},
    }
    cfg = write_config(tmp_path, doc)
    assert main(["phase-scan", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    csv_lines, summary, _ = read_outputs(str(tmp_path / "o"), "phase-scan")
    assert csv_lines[0] == "E,lambda,L0,L0_err,L1,L1_err,verdict,s,sum_trace_tail"
    assert len(csv_lines) == 1 + 2
    assert sum(summary["verdict_counts"].values()) == 2


def test_verify_all_quick(tmp_path):
    doc = {
        "command": "verify-all",
        "model": {"topology": {"kind": "tree", "branching": 2, "depth": 8},
                  "dist": {"kind": "uniform", "a": -1.0, "b": 1.0},
                  "lambda": 0.4, "seed": 7},
        "params": {"quick": True},
    }
    cfg = write_config(tmp_path, doc)
    code = main(["verify-all", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    csv_lines, summary, manifest = read_outputs(str(tmp_path / "o"), "verify-all")
    assert csv_lines[0] == "name,class,status,observed,bound,tolerance"
    assert summary["all_pass"] is True
    assert summary["failures"] == 0
    assert len(summary["checks"]) == len(csv_lines) - 1 >= 10
    statuses = {c["status"] for c in summary["checks"]}
    assert statuses <= {"pass", "warn"}
    assert manifest["status"] in ("ok", "warnings")


# ------------------------------------------------------------- determinism


def _digest_files(out_dir, names):
    return {n: file_sha256(os.path.join(out_dir, n)) for n in names}


@pytest.mark.parametrize("command,doc", [
    ("dos", {
        "command": "dos", "model": BOX_MODEL,
        "params": {"energies": {"lo": -2.0, "hi": 2.0, "count": 3},
                   "replicates": 24, "chunk": 5},
    }),
    ("phase-scan", {
        "command": "phase-scan",
        "model": dict(TREE_MODEL, topology={"kind": "tree", "branching": 2, "depth": 10}),
        "params": {"energies": [0.0, 1.0], "lambdas": [0.5], "d_window": [4, 8],
                   "replicates": 6, "chunk": 4},
    }),
])
def test_worker_count_does_not_change_bytes(tmp_path, command, doc):
    cfg = load_config(write_config(tmp_path, doc))
    names = [f"{command}.csv", f"{command}.summary.json"]
    digests = {}
    for workers in (1, 8):
        out = str(tmp_path / f"w{workers}")
        code, manifest = run(cfg, out_dir=out, workers=workers)
        assert code == EXIT_OK
        assert manifest["workers"] == workers
        digests[workers] = _digest_files(out, names)
    assert digests[1] == digests[8]


def test_seed_override_recorded_and_changes_data(tmp_path):
    doc = {
        "command": "dos", "model": BOX_MODEL,
        "params": {"energies": [0.0], "replicates": 16, "chunk": 8},
    }
    cfg = load_config(write_config(tmp_path, doc))
    outputs = {}
    for seed in (1, 2):
        out = str(tmp_path / f"s{seed}")
        code, manifest = run(cfg, out_dir=out, seed=seed)
        assert code == EXIT_OK
        assert manifest["seed"] == seed
        with open(os.path.join(out, "dos.csv")) as fh:
            outputs[seed] = fh.read()
    assert outputs[1] != outputs[2]


def test_manifest_written_last_and_digest_matches(tmp_path):
    doc = {
        "command": "green", "model": BOX_MODEL,
        "params": {"x": 0, "energy": 0.2, "eta": 1e-3, "replicate": 0},
    }
    cfg = load_config(write_config(tmp_path, doc))
    out = str(tmp_path / "o")
    code, manifest = run(cfg, out_dir=out)
    assert code == EXIT_OK
    assert manifest["config_digest"] == config_digest(cfg.canonical())
    # manifest hash covers the exact bytes on disk, so it was written after
    for rec in manifest["outputs"]:
        assert rec["sha256"] == file_sha256(os.path.join(out, rec["file"]))
    # no temp files left behind by the atomic writer
    assert not [f for f in os.listdir(out) if f.startswith(".tmp-")]


def test_csv_floats_roundtrip(tmp_path):
    doc = {
        "command": "dos", "model": BOX_MODEL,
        "params": {"energies": [0.123456789012345678], "replicates": 8, "chunk": 8},
    }
    cfg = load_config(write_config(tmp_path, doc))
    out = str(tmp_path / "o")
    run(cfg, out_dir=out)
    with open(os.path.join(out, "dos.csv")) as fh:
        header, line = fh.read().splitlines()
    e_text = line.split(",")[0]
    # 17 significant digits: the printed value parses back bit-for-bit
    assert float(e_text) == 0.123456789012345678
