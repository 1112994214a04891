"""Command-line behavior: config parsing, outputs, exit codes, determinism."""

import math
import os
import subprocess
import sys

import pytest

from tcode.cli import (
    CURVE_HEADER,
    GAINS_HEADER,
    MESSAGES_HEADER,
    PAIRS_HEADER,
    RATIOS_HEADER,
    main,
    parse_config,
)
from tcode.errors import ConfigurationError

BASE_CONFIG = """\
[topology]
rows = 1
cols = 2
removal_fraction = 0.0

[traffic]
rates_msgs_s = 40
deadline_s = 0.05

[code]
k = 1
n = 2

[run]
routing = random_shortest_path
horizon_s = 4
warmup_fraction = 0.1
replications = 2
master_seed = 13
"""


def write_config(tmp_path, text=BASE_CONFIG, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    return lines[0], [ln.split(",") for ln in lines[1:] if not ln.startswith("#")]


# --- config files -------------------------------------------------------------


class TestParseConfig:
    def test_round_trip(self, tmp_path):
        cfg = parse_config(write_config(tmp_path))
        assert cfg.rows == 1 and cfg.cols == 2
        assert cfg.rates == (40.0,)
        assert cfg.k == 1 and cfg.n == 2
        assert cfg.routing == "random_shortest_path"
        assert cfg.replications == 2
        assert cfg.master_seed == 13

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        text = "# leading comment\n\n" + BASE_CONFIG.replace(
            "k = 1", "k = 1  # trailing comment"
        )
        cfg = parse_config(write_config(tmp_path, text))
        assert cfg.k == 1

    def test_unknown_section(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG + "\n[wires]\nx = 1\n")
        with pytest.raises(ConfigurationError, match=r"\.cfg:21: unknown section"):
            parse_config(path)

    def test_unknown_key_names_line(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("rows = 1", "rowz = 1"))
        with pytest.raises(ConfigurationError, match=r"\.cfg:2: unknown key 'rowz'"):
            parse_config(path)

    def test_duplicate_key(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG + "\n[code]\nk = 2\n")
        with pytest.raises(ConfigurationError, match="duplicate key 'k'"):
            parse_config(path)

    def test_key_outside_section(self, tmp_path):
        path = write_config(tmp_path, "rows = 1\n" + BASE_CONFIG)
        with pytest.raises(ConfigurationError, match="outside any section"):
            parse_config(path)

    def test_empty_value(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("rows = 1", "rows ="))
        with pytest.raises(ConfigurationError, match="empty value for 'rows'"):
            parse_config(path)

    def test_unparseable_value(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("rows = 1", "rows = one"))
        with pytest.raises(ConfigurationError, match="cannot parse 'one' as int"):
            parse_config(path)

    def test_missing_equals(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("rows = 1", "rows"))
        with pytest.raises(ConfigurationError, match="expected 'key = value'"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="cannot read config"):
            parse_config(str(tmp_path / "absent.cfg"))

    def test_semantic_validation_applies(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("n = 2", "n = 0"))
        with pytest.raises(ConfigurationError, match="n:"):
            parse_config(path)

    def test_topology_file_resolved_relative_to_config(self, tmp_path):
        from tcode.network import LinkParams, build_grid, save_topology

        save_topology(build_grid(1, 2, LinkParams(1e7, 2e-3)), str(tmp_path / "net.topo"))
        text = BASE_CONFIG.replace(
            "[topology]\nrows = 1\ncols = 2\nremoval_fraction = 0.0",
            "[topology]\nfile = net.topo",
        )
        cfg = parse_config(write_config(tmp_path, text))
        assert os.path.isabs(cfg.topology_file)
        assert cfg.topology_file.endswith("net.topo")

    def test_topology_file_must_exist(self, tmp_path):
        text = BASE_CONFIG.replace(
            "[topology]\nrows = 1\ncols = 2\nremoval_fraction = 0.0",
            "[topology]\nfile = ghost.topo",
        )
        with pytest.raises(ConfigurationError, match="no such file"):
            parse_config(write_config(tmp_path, text))


# --- exit codes ---------------------------------------------------------------


class TestExitCodes:
    def test_success(self, tmp_path):
        rc = main(["analyze", "--rho", "0.5", "--k", "4", "--n-max", "8",
                   "--out", str(tmp_path), "--quiet"])
        assert rc == 0

    def test_usage_error_is_1(self, capsys):
        assert main([]) == 1
        assert main(["analyze", "--bogus"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_config_error_is_1(self, tmp_path, capsys):
        path = write_config(tmp_path, BASE_CONFIG.replace("rows = 1", "rowz = 1"))
        assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_saturation_is_2(self, tmp_path, capsys):
        rc = main(["analyze", "--rho", "1.0", "--k", "4", "--n-max", "8",
                   "--out", str(tmp_path), "--quiet"])
        assert rc == 2
        assert "infeasible:" in capsys.readouterr().err

    def test_domain_error_is_1(self, tmp_path):
        rc = main(["analyze", "--rho", "-0.1", "--k", "4", "--n-max", "8",
                   "--out", str(tmp_path), "--quiet"])
        assert rc == 1

    def test_internal_error_is_3(self, tmp_path, capsys, monkeypatch):
        from tcode import cli
        from tcode.errors import TcodeError

        monkeypatch.setattr(cli, "run_paired", lambda cfg: (_ for _ in ()).throw(
            TcodeError("boom")))
        path = write_config(tmp_path)
        assert main(["pair", "--config", path, "--out", str(tmp_path / "o")]) == 3
        assert "failure: boom" in capsys.readouterr().err

    def test_unexpected_exception_is_3(self, tmp_path, capsys, monkeypatch):
        from tcode import cli

        monkeypatch.setattr(cli, "run_paired", lambda cfg: (_ for _ in ()).throw(
            ZeroDivisionError("surprise")))
        path = write_config(tmp_path)
        assert main(["pair", "--config", path, "--out", str(tmp_path / "o")]) == 3
        assert "ZeroDivisionError" in capsys.readouterr().err

    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("tcode ")

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0


# --- analyze ------------------------------------------------------------------


class TestAnalyze:
    def test_curve_matches_closed_form(self, tmp_path):
        from tcode.analytics import gain

        assert main(["analyze", "--rho", "0.6", "--k", "8", "--n-max", "12",
                     "--out", str(tmp_path), "--quiet"]) == 0
        header, rows = read_csv(tmp_path / "gain_curve.csv")
        assert header == CURVE_HEADER
        assert [int(r[0]) for r in rows] == list(range(8, 13))
        for r in rows:
            n = int(r[0])
            if r[5] == "1":
                assert math.isclose(float(r[4]), gain(0.6, 8, n), rel_tol=1e-8)

    def test_infeasible_rows_marked(self, tmp_path):
        # k/n > rho fails from n=5 on when rho=0.9, k=4
        assert main(["analyze", "--rho", "0.9", "--k", "4", "--n-max", "7",
                     "--out", str(tmp_path), "--quiet"]) == 0
        _, rows = read_csv(tmp_path / "gain_curve.csv")
        flags = {int(r[0]): r[5] for r in rows}
        assert flags == {4: "1", 5: "0", 6: "0", 7: "0"}

    def test_optimal_summary_line(self, tmp_path):
        main(["analyze", "--rho", "0.6", "--k", "8", "--n-max", "24",
              "--out", str(tmp_path), "--quiet"])
        with open(tmp_path / "gain_curve.csv", encoding="utf-8") as fh:
            last = fh.readlines()[-1]
        assert last.startswith("# optimal n = 9,")


# --- simulation subcommands ---------------------------------------------------


class TestSimulate:
    def test_metrics_csv(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        assert main(["simulate", "--config", path, "--out", out, "--quiet"]) == 0
        header, rows = read_csv(os.path.join(out, "metrics.csv"))
        assert header == PAIRS_HEADER
        assert len(rows) == 1
        row = dict(zip(header.split(","), rows[0]))
        assert row["arm"] == "coded"
        assert row["k"] == "1" and row["n"] == "2"
        assert row["replications"] == "2"
        assert float(row["delay_mean_s"]) > 0.0
        assert os.path.isfile(os.path.join(out, "manifest.txt"))

    def test_uncoded_arm_label(self, tmp_path):
        path = write_config(tmp_path, BASE_CONFIG.replace("n = 2", "n = 1"))
        out = str(tmp_path / "out")
        main(["simulate", "--config", path, "--out", out, "--quiet"])
        _, rows = read_csv(os.path.join(out, "metrics.csv"))
        assert rows[0][4] == "uncoded"

    def test_messages_csv_on_request(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["simulate", "--config", path, "--out", out, "--messages", "--quiet"])
        header, rows = read_csv(os.path.join(out, "messages.csv"))
        assert header == MESSAGES_HEADER
        assert len(rows) > 50
        reps = {int(r[0]) for r in rows}
        assert reps == {0, 1}
        # per replication, message ids are strictly increasing
        for rep in reps:
            ids = [int(r[1]) for r in rows if int(r[0]) == rep]
            assert ids == sorted(ids)

    def test_no_messages_csv_by_default(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        main(["simulate", "--config", path, "--out", out, "--quiet"])
        assert not os.path.exists(os.path.join(out, "messages.csv"))

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        for out in (out1, out2):
            main(["simulate", "--config", path, "--out", out, "--messages", "--quiet"])
        for name in ("metrics.csv", "messages.csv", "manifest.txt"):
            with open(os.path.join(out1, name), "rb") as fh:
                first = fh.read()
            with open(os.path.join(out2, name), "rb") as fh:
                second = fh.read()
            assert first == second, name

    def test_seed_override_changes_results(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        main(["simulate", "--config", path, "--out", out1, "--quiet"])
        main(["simulate", "--config", path, "--out", out2, "--seed", "99", "--quiet"])
        _, rows1 = read_csv(os.path.join(out1, "metrics.csv"))
        _, rows2 = read_csv(os.path.join(out2, "metrics.csv"))
        assert rows1 != rows2

    def test_manifest_reflects_seed_override(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "o")
        main(["simulate", "--config", path, "--out", out, "--seed", "99", "--quiet"])
        with open(os.path.join(out, "manifest.txt"), encoding="utf-8") as fh:
            text = fh.read()
        assert "run.master_seed = 99" in text


class TestPair:
    def test_outputs(self, tmp_path):
        path = write_config(tmp_path)
        out = str(tmp_path / "out")
        assert main(["pair", "--config", path, "--out", out, "--quiet"]) == 0
        header, rows = read_csv(os.path.join(out, "pairs.csv"))
        assert header == PAIRS_HEADER
        assert [r[4] for r in rows] == ["uncoded", "coded"]
        assert [r[2] for r in rows] == ["1", "2"]

        rheader, rrows = read_csv(os.path.join(out, "ratios.csv"))
        assert rheader == RATIOS_HEADER
        assert len(rrows) == 1
        gain = float(rrows[0][3])
        unc = float(rows[0][6])
        cod = float(rows[1][6])
        assert math.isclose(gain, unc / cod, rel_tol=1e-6)

    def test_pair_needs_redundancy(self, tmp_path, capsys):
        path = write_config(tmp_path, BASE_CONFIG.replace("n = 2", "n = 1"))
        assert main(["pair", "--config", path, "--out", str(tmp_path / "o")]) == 1
        assert "n" in capsys.readouterr().err


class TestSweeps:
    def test_sweep_load_rows(self, tmp_path):
        text = BASE_CONFIG.replace("rates_msgs_s = 40", "rates_msgs_s = 20, 40")
        path = write_config(tmp_path, text)
        out = str(tmp_path / "out")
        assert main(["sweep-load", "--config", path, "--out", out, "--quiet"]) == 0
        _, rows = read_csv(os.path.join(out, "pairs.csv"))
        assert len(rows) == 4
        assert [r[0] for r in rows] == ["20", "20", "40", "40"]
        _, rrows = read_csv(os.path.join(out, "ratios.csv"))
        assert len(rrows) == 2

    def test_sweep_rate_rows(self, tmp_path):
        text = BASE_CONFIG.replace("n = 2", "n = 2\nn_values = 1, 2, 3")
        path = write_config(tmp_path, text)
        out = str(tmp_path / "out")
        assert main(["sweep-rate", "--config", path, "--out", out, "--quiet"]) == 0
        header, rows = read_csv(os.path.join(out, "gains.csv"))
        assert header == GAINS_HEADER
        assert [int(r[0]) for r in rows] == [1, 2, 3]
        # the n == k row is the baseline against itself
        assert rows[0][2] == "1"
        # one shared uncoded row, then one per coded n
        _, prows = read_csv(os.path.join(out, "pairs.csv"))
        assert [r[4] for r in prows] == ["uncoded", "coded", "coded"]

    def test_sweep_rate_deterministic(self, tmp_path):
        text = BASE_CONFIG.replace("n = 2", "n = 2\nn_values = 1, 2")
        path = write_config(tmp_path, text)
        blobs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            main(["sweep-rate", "--config", path, "--out", out, "--quiet"])
            with open(os.path.join(out, "gains.csv"), "rb") as fh:
                blobs.append(fh.read())
        assert blobs[0] == blobs[1]


class TestValidateConfig:
    def test_echoes_resolved_settings(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["validate-config", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "code.k = 1" in out
        assert "run.routing = random_shortest_path" in out

    def test_rejects_bad_config(self, tmp_path, capsys):
        path = write_config(tmp_path, BASE_CONFIG.replace("k = 1", "k = 0"))
        assert main(["validate-config", "--config", path]) == 1
        assert "error:" in capsys.readouterr().err


def test_console_script_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "tcode", "--version"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("tcode ")
