from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from cloudtwin.cli import EXIT_BIND, EXIT_CONFIG, EXIT_FETCH, EXIT_OK, main

GOLDEN_DIR = Path(__file__).parent / "golden"
SCENARIO_DIR = Path(__file__).parent / "scenarios"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in list(os.environ):
        if var.startswith("TWIN_"):
            monkeypatch.delenv(var)


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSnapshot:
    def test_mock_snapshot_matches_golden_bytes(self, capsys):
        code, out, _err = run_cli(["snapshot", "--mock"], capsys)
        assert code == EXIT_OK
        assert out == (GOLDEN_DIR / "f1_scene.json").read_text()

    def test_two_runs_are_byte_identical(self, capsys):
        _code, first, _err = run_cli(["snapshot", "--mock"], capsys)
        _code, second, _err = run_cli(["snapshot", "--mock"], capsys)
        assert first == second

    def test_dash_out_means_stdout(self, capsys):
        code, out, _err = run_cli(["snapshot", "--mock", "--out", "-"], capsys)
        assert code == EXIT_OK
        assert json.loads(out)["at_seq"] == 1

    def test_out_file_written_and_stdout_quiet(self, capsys, tmp_path):
        target = tmp_path / "scene.json"
        code, out, _err = run_cli(["snapshot", "--mock", "--out", str(target)], capsys)
        assert code == EXIT_OK
        assert out == ""
        assert target.read_text() == (GOLDEN_DIR / "f1_scene.json").read_text()

    def test_unwritable_out_fails(self, capsys, tmp_path):
        code, _out, err = run_cli(
            ["snapshot", "--mock", "--out", str(tmp_path / "absent" / "scene.json")], capsys
        )
        assert code == 1
        assert "cannot write" in err

    def test_missing_credentials_without_mock(self, capsys):
        code, _out, err = run_cli(["snapshot"], capsys)
        assert code == EXIT_CONFIG
        for key in ("cloud.auth_url", "cloud.username", "cloud.password", "cloud.project_name"):
            assert f"missing required key {key}" in err

    def test_unreachable_metering_source_is_fetch_failure(self, capsys, tmp_path):
        config = tmp_path / "twin.toml"
        config.write_text(f'[metering]\nsource = "{tmp_path / "absent.json"}"\n')
        code, _out, err = run_cli(["snapshot", "--mock", "--config", str(config)], capsys)
        assert code == EXIT_FETCH
        assert "snapshot failed" in err

    def test_bad_config_file(self, capsys, tmp_path):
        config = tmp_path / "twin.toml"
        config.write_text("[reconciler]\npoll_interval = 0.0\n")
        code, _out, err = run_cli(["snapshot", "--mock", "--config", str(config)], capsys)
        assert code == EXIT_CONFIG
        assert "config error: [reconciler] poll_interval must be > 0" in err

    def test_env_override_reaches_snapshot(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv("TWIN_SCENE_ENERGY_MAX_WATTS", "not-a-number")
        code, _out, err = run_cli(["snapshot", "--mock"], capsys)
        assert code == EXIT_CONFIG
        assert "TWIN_SCENE_ENERGY_MAX_WATTS" in err


class TestServeFailures:
    def test_missing_credentials_without_mock(self, capsys):
        code, _out, err = run_cli(["serve"], capsys)
        assert code == EXIT_CONFIG
        assert "missing required key cloud.auth_url" in err

    def test_bad_listen_flag(self, capsys):
        code, _out, err = run_cli(["serve", "--mock", "--listen", "nohost"], capsys)
        assert code == EXIT_CONFIG
        assert "--listen" in err

    def test_occupied_port_exits_bind_failure(self, capsys):
        blocker = socket.socket()
        try:
            blocker.bind(("127.0.0.1", 0))
            blocker.listen(1)
            port = blocker.getsockname()[1]
            code, _out, err = run_cli(["serve", "--mock", "--listen", f"127.0.0.1:{port}"], capsys)
            assert code == EXIT_BIND
            assert "cannot bind" in err
        finally:
            blocker.close()


class TestServeEndToEnd:
    def test_mock_serve_answers_and_stops_on_interrupt(self):
        proc = subprocess.Popen(
            [sys.executable, "-m", "cloudtwin.cli", "serve", "--mock", "--listen", "127.0.0.1:0"],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            # the CLI announces the bound address on stderr, interleaved with log lines
            address = None
            for _ in range(50):
                line = proc.stderr.readline()
                if line.startswith("listening on "):
                    address = line.split()[-1]
                    break
            assert address is not None, "no bind announcement on stderr"

            deadline = time.monotonic() + 10
            scene = None
            while time.monotonic() < deadline:
                try:
                    with urllib.request.urlopen(f"http://{address}/healthz", timeout=2) as resp:
                        if json.loads(resp.read())["status"] == "ready":
                            with urllib.request.urlopen(f"http://{address}/scene", timeout=2) as scene_resp:
                                scene = json.loads(scene_resp.read())
                            break
                except OSError:
                    pass
                time.sleep(0.2)
            assert scene is not None, "service never became ready"
            assert len(scene["plates"]) == 2 and len(scene["boxes"]) == 3

            proc.send_signal(signal.SIGINT)
            assert proc.wait(timeout=10) == EXIT_OK
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()


class TestReplay:
    def test_stop_scenario_matches_golden_transcript(self, capsys):
        code, out, _err = run_cli(["replay", str(SCENARIO_DIR / "stop_vm.json")], capsys)
        assert code == EXIT_OK
        assert out == (GOLDEN_DIR / "stop_vm_transcript.txt").read_text()

    def test_transcripts_are_deterministic(self, capsys):
        _c, first, _e = run_cli(["replay", str(SCENARIO_DIR / "stop_vm.json")], capsys)
        _c, second, _e = run_cli(["replay", str(SCENARIO_DIR / "stop_vm.json")], capsys)
        assert first == second

    def test_fault_scenario_reports_staleness_edges(self, capsys):
        code, out, _err = run_cli(["replay", str(SCENARIO_DIR / "fault_staleness.json")], capsys)
        assert code == EXIT_OK
        assert out.splitlines() == [
            "t=0.000 fault servers http-500 x9",
            "t=3.000 staleness=raised",
            "t=4.000 staleness=cleared",
        ]

    def test_stalled_operation_times_out_in_transcript(self, capsys):
        code, out, _err = run_cli(["replay", str(SCENARIO_DIR / "op_timeout.json")], capsys)
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[0] == "t=0.000 fault action stall x1"
        assert lines[1] == "t=0.000 command stop vm-0001 accepted op-000001"
        assert lines[-1].startswith("t=61.000 seq=2 ")
        assert json.loads(lines[-1].split(" ", 2)[2])["kind"] == "op-timed-out"

    def test_empty_scenario_produces_empty_transcript(self, capsys, tmp_path):
        scenario = tmp_path / "empty.json"
        scenario.write_text('{"steps": []}')
        code, out, _err = run_cli(["replay", str(scenario)], capsys)
        assert code == EXIT_OK
        assert out == ""

    def test_rejected_command_logged_not_fatal(self, capsys, tmp_path):
        scenario = tmp_path / "reject.json"
        scenario.write_text(
            json.dumps({"steps": [{"at": 0.0, "command": {"kind": "stop", "subject": "vm-0002"}}]})
        )
        code, out, _err = run_cli(["replay", str(scenario)], capsys)
        assert code == EXIT_OK
        assert "command stop vm-0002 rejected conflict:" in out

    @pytest.mark.parametrize(
        "doc,needle",
        [
            ("[1,2]", "steps"),
            ('{"steps": 5}', "steps"),
            ('{"steps": [7]}', "step 0 must be an object"),
            ('{"steps": [{"command": {"kind": "stop", "subject": "x"}}]}', "'at' must be a non-negative number"),
            ('{"steps": [{"at": -1, "advance": 1}]}', "'at' must be a non-negative number"),
            ('{"steps": [{"at": true, "advance": 1}]}', "'at' must be a non-negative number"),
            ('{"steps": [{"at": 5, "advance": 1}, {"at": 1, "advance": 1}]}', "ordered by 'at'"),
            ('{"steps": [{"at": 0}]}', "exactly one of command/fault/advance"),
            ('{"steps": [{"at": 0, "advance": 1, "fault": {"endpoint": "servers", "behaviour": "stall"}}]}', "exactly one"),
            ('{"steps": [{"at": 0, "command": {"kind": "stop"}}]}', "command needs string"),
            ('{"steps": [{"at": 0, "fault": {"endpoint": "servers", "behaviour": "explode"}}]}', "http-500|timeout|stall"),
            ('{"steps": [{"at": 0, "fault": {"endpoint": "servers", "behaviour": "stall", "count": "many"}}]}', "fault needs"),
            ('{"steps": [{"at": 0, "advance": -2}]}', "advance must be a non-negative"),
            ("{nope", "not valid JSON"),
        ],
    )
    def test_malformed_scenarios_exit_config(self, capsys, tmp_path, doc, needle):
        scenario = tmp_path / "bad.json"
        scenario.write_text(doc)
        code, _out, err = run_cli(["replay", str(scenario)], capsys)
        assert code == EXIT_CONFIG
        assert err.startswith("scenario error: ")
        assert needle in err

    def test_unreadable_scenario_exits_config(self, capsys, tmp_path):
        code, _out, err = run_cli(["replay", str(tmp_path / "absent.json")], capsys)
        assert code == EXIT_CONFIG
        assert "cannot read scenario" in err


class TestParser:
    def test_subcommand_required(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main([])
        assert exc_info.value.code == 2

    def test_unknown_log_level_rejected(self, capsys):
        with pytest.raises(SystemExit):
            main(["--log-level", "chatty", "snapshot", "--mock"])

    def test_console_script_is_wired(self):
        result = subprocess.run(
            [sys.executable, "-m", "cloudtwin.cli", "--help"], capture_output=True, text=True
        )
        assert result.returncode == 0
        assert "serve" in result.stdout and "snapshot" in result.stdout and "replay" in result.stdout
