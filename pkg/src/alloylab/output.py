"""Run directories, RFC-4180 CSV tables and the manifest.

Floats are written with ``repr`` so that they round-trip exactly. Every
table carries ``config_hash`` and ``seed`` columns and every JSON file
carries the same two fields.
"""

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    return value


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str
    config: dict
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    workers: int = 1
    smoke: bool = False


class RunWriter:
    """Writes all files of one run below ``<out>/<config_hash>/``."""

    def __init__(self, out, manifest):
        self.manifest = manifest
        self.directory = os.path.join(out, manifest.config_hash)
        os.makedirs(self.directory, exist_ok=True)
        self._clock = {}

    @property
    def stamp(self):
        return f"config_hash={self.manifest.config_hash} seed={self.manifest.seed}"

    def path(self, name):
        return os.path.join(self.directory, name)

    def start(self, label):
        self._clock[label] = time.perf_counter()

    def stop(self, label):
        self.manifest.timings[label] = time.perf_counter() - self._clock.pop(label)

    def table(self, name, columns, rows):
        """Write ``rows`` (dicts or sequences) with the run stamp prepended."""
        header = ["config_hash", "seed", *columns]
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
            writer.writerow(header)
            for row in rows:
                values = [row[c] for c in columns] if isinstance(row, dict) else list(row)
                writer.writerow([self.manifest.config_hash, self.manifest.seed,
                                 *[_cell(v) for v in values]])
        self.manifest.outputs[name] = "csv"
        return self.path(name)

    def json(self, name, payload):
        doc = {"config_hash": self.manifest.config_hash, "seed": self.manifest.seed,
               **_jsonable(payload)}
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.manifest.outputs[name] = "json"
        return self.path(name)

    def figure(self, name, plot_fn, *args, **kwargs):
        plot_fn(self.path(name), *args, stamp=self.stamp, **kwargs)
        self.manifest.outputs[name] = "svg"
        return self.path(name)

    def check(self, name, passed, detail=""):
        self.manifest.checks[name] = {"passed": bool(passed), "detail": detail}

    @property
    def passed(self):
        return all(c["passed"] for c in self.manifest.checks.values())

    def finish(self):
        m = self.manifest
        doc = {"command": m.command, "config_hash": m.config_hash, "seed": m.seed,
               "version": m.version, "workers": m.workers, "smoke": m.smoke,
               "config": m.config, "outputs": dict(sorted(m.outputs.items())),
               "timings_s": m.timings, "checks": m.checks, "passed": self.passed}
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.path("manifest.json")


def read_table(path):
    """Rows of a CSV written by :class:`RunWriter` as dicts of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
