"""Experiment configuration: sectioned ``key = value`` text (or a JSON manifest).

Example::

    [params]
    n = 1
    alpha = 1.0
    p = 2.0

    [problem]
    domain = interval
    points = 1025

Parsing records the line of every key so validation findings can point at it.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .geometry import Params, critical_exponent
from .operator import QuadratureConfig

COMMANDS = (
    "eval", "oracle-compare", "kernels", "barriers", "mp-check", "solve", "sweep-p",
    "moving-planes", "blowup", "classify",
)
SECTIONS = ("params", "grid", "quadrature", "problem", "blowup", "run")
NEEDS_P = ("solve", "moving-planes", "blowup")
NEEDS_2D = ("kernels", "mp-check", "moving-planes")

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


@dataclass
class ExperimentConfig:
    command: str | None
    sections: dict
    lines: dict = field(default_factory=dict)  # (section, key) or section -> line number
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def where(self, section, key=None):
        ln = self.lines.get((section, key)) if key is not None else None
        ln = ln or self.lines.get(section)
        return f"line {ln}: " if ln else ""

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get_float(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else float(v)

    def get_int(self, section, key, default=None):
        v = self.get(section, key)
        return default if v is None else int(v)

    def get_floats(self, section, key, default=None):
        v = self.get(section, key)
        if v is None:
            return default
        return [_float(t) for t in v.replace(",", " ").split()]

    def get_bool(self, section, key, default=False):
        v = self.get(section, key)
        return default if v is None else v.strip().lower() in ("1", "true", "yes", "on")

    @property
    def params(self):
        n = self.get_int("params", "n")
        alpha = self.get_float("params", "alpha")
        p = self.get_float("params", "p")
        c = self.get_float("params", "C_norm")
        return Params(n, alpha, p, c)

    @property
    def quadrature(self):
        text = "\n".join(f"{k} = {v}" for k, v in self.sections.get("quadrature", {}).items())
        return QuadratureConfig.from_text(text)

    @property
    def thresholds(self):
        return (self.get_float("blowup", "low", 0.1), self.get_float("blowup", "high", 10.0))

    def manifest(self):
        """Resolved configuration plus tool version; loadable by :func:`load_config`."""
        sections = {s: dict(kv) for s, kv in self.sections.items()}
        sections.setdefault("run", {}).update(seed=str(self.seed), workers=str(self.workers))
        return {
            "tool": "fraclap",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "workers": self.workers,
            "config": {s: dict(sorted(kv.items())) for s, kv in sorted(sections.items())},
        }


def _float(tok):
    t = tok.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(tok)


class ConfigSyntaxError(ValueError):
    pass


def parse_text(text, command=None):
    """Parse config text; syntax problems raise :class:`ConfigSyntaxError` with a line number."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _from_manifest(json.loads(text), command)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigSyntaxError(f"line {exc.lineno}: key outside any [section]") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigSyntaxError(f"line {exc.lineno}: {exc.message if hasattr(exc, 'message') else exc}") from None
    except configparser.ParsingError as exc:
        ln = exc.errors[0][0] if exc.errors else "?"
        raise ConfigSyntaxError(f"line {ln}: cannot parse {exc.errors[0][1] if exc.errors else ''}") from None
    lines = {}
    section = None
    for i, raw in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault(section, i)
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), i)
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    return _finish(sections, lines, command)


def _from_manifest(data, command):
    sections = {s: {k: str(v) for k, v in kv.items()} for s, kv in data.get("config", {}).items()}
    run = sections.setdefault("run", {})
    for key in ("seed", "workers"):
        if key in data and key not in run:
            run[key] = str(data[key])
    return _finish(sections, {}, command or data.get("command"))


def _finish(sections, lines, command):
    run = sections.get("run", {})
    command = command or run.get("command")
    cfg = ExperimentConfig(command, sections, lines)
    try:
        cfg.seed = int(run.get("seed", 0))
        cfg.workers = int(run.get("workers", 1))
    except ValueError:
        pass  # reported by validate
    cfg.output_dir = run.get("output_dir", "out")
    return cfg


def load_config(path, command=None):
    return parse_text(Path(path).read_text(), command)


def validate(cfg):
    """Range and consistency findings, without running anything (empty list = valid)."""
    out = []
    w = cfg.where
    if cfg.command not in COMMANDS:
        out.append(f"unknown command {cfg.command!r}; expected one of {', '.join(COMMANDS)}")
    for s in cfg.sections:
        if s not in SECTIONS:
            out.append(f"{w(s)}unknown section [{s}]")
    for key in ("n", "alpha"):
        if cfg.get("params", key) is None:
            out.append(f"{w('params')}missing required key '{key}' in [params]")
    n = alpha = None
    try:
        n = cfg.get_int("params", "n")
        if n is not None and n not in (1, 2, 3):
            out.append(f"{w('params', 'n')}n = {n} must be 1, 2 or 3")
            n = None
    except ValueError:
        out.append(f"{w('params', 'n')}n must be an integer, got {cfg.get('params', 'n')!r}")
    try:
        alpha = cfg.get_float("params", "alpha")
        if alpha is not None and not 0 < alpha < 2:
            out.append(f"{w('params', 'alpha')}alpha = {alpha} outside (0, 2)")
            alpha = None
    except ValueError:
        out.append(f"{w('params', 'alpha')}alpha must be a number, got {cfg.get('params', 'alpha')!r}")
    if n is not None and alpha is not None:
        crit = critical_exponent(n, alpha)

        def check_p(p, where):
            if not 1.0 < p < crit:
                out.append(f"{where}exponent not subcritical: p = {p} outside (1, {crit:.6g})")

        try:
            p = cfg.get_float("params", "p")
            if p is not None:
                check_p(p, w("params", "p"))
            elif cfg.command in NEEDS_P:
                out.append(f"{w('params')}missing required key 'p' in [params] for {cfg.command}")
        except ValueError:
            out.append(f"{w('params', 'p')}p must be a number")
        if cfg.command == "sweep-p":
            try:
                plist = cfg.get_floats("problem", "p_list")
                if not plist:
                    out.append(f"{w('problem')}missing required key 'p_list' in [problem]")
                else:
                    for p in plist:
                        check_p(p, w("problem", "p_list"))
                    if any(b <= a for a, b in zip(plist, plist[1:])):
                        out.append(f"{w('problem', 'p_list')}p_list must be strictly ascending")
            except ValueError:
                out.append(f"{w('problem', 'p_list')}p_list must be numbers")
        if cfg.command in NEEDS_2D and n != 2:
            out.append(f"{w('params', 'n')}{cfg.command} runs in n = 2 (got n = {n})")
        if cfg.command == "barriers" and n == 3:
            out.append(f"{w('params', 'n')}barriers need n = 1 or 2")
    try:
        low, high = cfg.thresholds
        if not 0 < low < high:
            out.append(f"{w('blowup', 'low')}thresholds need 0 < low < high (low = {low}, high = {high})")
    except ValueError:
        out.append(f"{w('blowup')}thresholds must be numbers")
    try:
        cfg.quadrature
    except Exception as exc:  # noqa: BLE001 - any quadrature problem is a finding
        out.append(f"{w('quadrature')}{exc}")
    run = cfg.sections.get("run", {})
    for key, lo in (("seed", 0), ("workers", 1)):
        if key in run:
            try:
                if int(run[key]) < lo:
                    out.append(f"{w('run', key)}{key} must be >= {lo}")
            except ValueError:
                out.append(f"{w('run', key)}{key} must be an integer, got {run[key]!r}")
    for key in ("points", "count", "samples", "sweep_points", "extent"):
        for sec in ("grid", "problem"):
            v = cfg.get(sec, key)
            if v is None:
                continue
            try:
                vals = [int(t) for t in v.replace(",", " ").split()]
                if any(m < 1 for m in vals) or (key in ("points", "extent") and any(m < 3 for m in vals)):
                    out.append(f"{w(sec, key)}{key} = {v} too small")
            except ValueError:
                out.append(f"{w(sec, key)}{key} must be integers, got {v!r}")
    for key in ("tol", "tolerance"):
        v = cfg.get("problem", key)
        if v is not None:
            try:
                if not float(v) > 0:
                    out.append(f"{w('problem', key)}{key} must be positive")
            except ValueError:
                out.append(f"{w('problem', key)}{key} must be a number")
    return out
