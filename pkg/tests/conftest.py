import json
import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def load_shipped_config(name):
    with open(os.path.join(CONFIG_DIR, f"{name}.json")) as fh:
        return json.load(fh)


class CliRuns:
    """Runs shipped configs through ``cli.run`` once per session and keeps the outputs."""

    def __init__(self, factory):
        self.factory = factory
        self.cache = {}

    def get(self, name, tag="a"):
        key = (name, tag)
        if key not in self.cache:
            from robinfb.cli import run

            out = str(self.factory.mktemp(f"{name}_{tag}"))
            t0 = time.perf_counter()
            run(load_shipped_config(name), out_dir=out)
            self.cache[key] = (out, time.perf_counter() - t0)
        return self.cache[key]

    def state(self, name):
        from robinfb.serialize import load_state

        out, _ = self.get(name)
        return load_state(os.path.join(out, "state.json"))

    def report(self, name):
        out, _ = self.get(name)
        with open(os.path.join(out, "report.json")) as fh:
            return json.load(fh)


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    return CliRuns(tmp_path_factory)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
