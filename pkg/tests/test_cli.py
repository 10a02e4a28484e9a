import json

import numpy as np
import pytest

from ailsrs.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from ailsrs.envs import lqr_optimal_policy, make_env
from ailsrs.metrics import read_metrics
from ailsrs.policy import PolicyParams, save_policy
from conftest import desk_expert

FAST = ["--n-directions", "4", "--eval-episodes", "2"]


@pytest.fixture(scope="module")
def expert_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "e1"
    argv = ["train-expert", "--env", "lqr", "--seed", "0", "--iterations", "5", "--out", str(out)] + FAST
    assert main(argv) == EXIT_OK
    return out, argv


@pytest.fixture(scope="module")
def dataset_file(expert_run):
    out, _ = expert_run
    path = out.parent / "d.jsonl"
    assert main(["record", "--env", "lqr", "--policy", str(out / "seed-0" / "policy.txt"),
                 "--episodes", "4", "--out", str(path)]) == EXIT_OK
    return path


def _eval(capsys, argv):
    assert main(argv) == EXIT_OK
    mean, std = capsys.readouterr().out.strip().split(" ± ")
    return float(mean), float(std)


def test_train_expert_layout(expert_run):
    out, _ = expert_run
    for name in ("manifest.json", "seed-0/policy.txt", "seed-0/metrics.csv", "seed-0/timing.csv"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["ars"]["n_directions"] == 4 and manifest["config"]["seeds"] == [0]
    assert manifest["config"]["ars"]["alpha"] == 0.02
    assert "code_version" in manifest and len(manifest["config_sha256"]) == 64
    assert [r.iteration for r in read_metrics(out / "seed-0" / "metrics.csv")] == list(range(6))


def test_rerun_and_manifest_replay_are_identical(expert_run, tmp_path):
    out, _ = expert_run
    argv = json.loads((out / "manifest.json").read_text())["argv"]
    argv[argv.index("--out") + 1] = str(tmp_path / "replay")
    assert main(argv) == EXIT_OK
    assert (tmp_path / "replay/seed-0/metrics.csv").read_bytes() == (out / "seed-0/metrics.csv").read_bytes()
    assert (tmp_path / "replay/seed-0/policy.txt").read_bytes() == (out / "seed-0/policy.txt").read_bytes()


def test_unknown_env_is_usage_error(tmp_path, capsys):
    assert main(["train-expert", "--env", "cartpole", "--out", str(tmp_path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "double-integrator" in err and "pendulum" in err


def test_bad_flags_are_usage_errors(tmp_path):
    assert main(["train-expert", "--env", "lqr", "--alpha", "-1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train-expert", "--env", "lqr", "--seeds", "a,b", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main(["eval", "--env", "lqr", "--policy", "x", "--workers", "0"]) == EXIT_USAGE


def test_missing_or_mismatched_files_are_io_errors(expert_run, tmp_path):
    out, _ = expert_run
    assert main(["eval", "--env", "lqr", "--policy", str(tmp_path / "nope.txt")]) == EXIT_IO
    assert main(["eval", "--env", "pendulum", "--policy", str(out / "seed-0/policy.txt")]) == EXIT_IO
    (tmp_path / "bad.jsonl").write_text("not json\n")
    assert main(["imitate", "--env", "lqr", "--dataset", str(tmp_path / "bad.jsonl"),
                 "--out", str(tmp_path / "o")]) == EXIT_IO


def test_numerical_failure_exit_code(tmp_path, capsys):
    argv = ["train-expert", "--env", "lqr", "--seeds", "0", "--iterations", "2", "--nu", "1e308",
            "--out", str(tmp_path / "o")] + FAST
    with np.errstate(all="ignore"):
        assert main(argv) == EXIT_NUMERICAL
    assert "non-finite" in capsys.readouterr().err


def test_record_writes_manifest(dataset_file):
    manifest = json.loads(dataset_file.with_name("d.jsonl.manifest.json").read_text())
    assert manifest["command"] == "record" and manifest["config"]["episodes"] == 4


def test_imitate_ailsrs_three_seeds(dataset_file, tmp_path):
    out = tmp_path / "a"
    argv = ["imitate", "--method", "ailsrs", "--env", "lqr", "--dataset", str(dataset_file), "--seeds", "0,1,2",
            "--iterations", "3", "--eval-every", "1", "--checkpoint-every", "3", "--out", str(out)] + FAST
    assert main(argv) == EXIT_OK
    for s in (0, 1, 2):
        rows = read_metrics(out / f"seed-{s}/metrics.csv")
        assert [r.seed for r in rows] == [s] * 4 and rows[-1].disc_loss > 0
        assert (out / f"seed-{s}/discriminator.json").is_file()
        assert (out / f"seed-{s}/checkpoint/state.json").is_file()


def test_resume_matches_uninterrupted_run(dataset_file, tmp_path):
    common = ["--env", "lqr", "--dataset", str(dataset_file), "--eval-every", "1"] + FAST
    assert main(["imitate", "--seeds", "1", "--iterations", "4", "--out", str(tmp_path / "full")] + common) == 0
    assert main(["imitate", "--seeds", "1", "--iterations", "2", "--checkpoint-every", "2",
                 "--out", str(tmp_path / "half")] + common) == 0
    assert main(["resume", "--checkpoint", str(tmp_path / "half/seed-1/checkpoint"), "--iterations", "4",
                 "--out", str(tmp_path / "rest")] + common) == 0
    full = read_metrics(tmp_path / "full/seed-1/metrics.csv")
    assert read_metrics(tmp_path / "rest/metrics.csv") == full[3:]
    assert (tmp_path / "rest/policy.txt").read_text() == (tmp_path / "full/seed-1/policy.txt").read_text()


def test_imitate_bc_single_row(dataset_file, tmp_path):
    out = tmp_path / "bc"
    argv = ["imitate", "--method", "bc", "--env", "lqr", "--dataset", str(dataset_file), "--seeds", "0",
            "--out", str(out), "--eval-episodes", "3"]
    assert main(argv) == EXIT_OK
    rows = read_metrics(out / "seed-0/metrics.csv")
    assert len(rows) == 1 and rows[0].iteration == 0


def test_budget_sweep_subdirectories(dataset_file, tmp_path):
    out = tmp_path / "sweep"
    argv = ["imitate", "--method", "bc", "--env", "lqr", "--dataset", str(dataset_file), "--seeds", "0",
            "--episodes-budget", "1,3", "--out", str(out), "--eval-episodes", "2"]
    assert main(argv) == EXIT_OK
    for b in (1, 3):
        manifest = json.loads((out / f"budget-{b}/manifest.json").read_text())
        assert manifest["config"]["episodes_budget"] == b
    assert main(argv[:-4] + ["--episodes-budget", "9", "--out", str(out)]) == EXIT_USAGE


def test_eval_population_std(tmp_path, capsys):
    save_policy(PolicyParams.zeros(2, 4, "double-integrator"), tmp_path / "z.txt")
    base = ["eval", "--env", "double-integrator", "--policy", str(tmp_path / "z.txt")]
    _, std = _eval(capsys, base + ["--episodes", "1"])
    assert std == 0.0
    m1, s1 = _eval(capsys, base + ["--episodes", "5", "--seed", "3"])
    m2, s2 = _eval(capsys, base + ["--episodes", "5", "--seed", "3", "--workers", "4"])
    assert (m1, s1) == (m2, s2) and s1 > 0


def test_expert_eval_within_five_percent_of_optimum(tmp_path, capsys):
    policy, _ = desk_expert("lqr", 0)
    save_policy(policy, tmp_path / "e.txt")
    mean, _ = _eval(capsys, ["eval", "--env", "lqr", "--policy", str(tmp_path / "e.txt"), "--episodes", "1000"])
    _, j_star = lqr_optimal_policy(make_env("lqr"))
    assert abs(-mean - j_star) / j_star < 0.05


def test_export_curves_command(expert_run, tmp_path):
    out, _ = expert_run
    m = str(out / "seed-0/metrics.csv")
    assert main(["export-curves", m, m, "--out", str(tmp_path / "c.csv"), "--sigma", "0"]) == EXIT_OK
    assert (tmp_path / "c.csv").read_text().startswith("# smoothing_sigma=0 n_series=2")
    assert main(["export-curves", m, "--out", str(tmp_path / "c.csv"), "--sigma", "-1"]) == EXIT_USAGE
