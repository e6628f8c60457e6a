"""Experiment configuration: flat `key = value` files with # comments.

Keys may carry dotted section prefixes (saddle.t_star = 15).  Values stay
strings until a consumer coerces them; CLI flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

STOCHASTIC_SUBCOMMANDS = {"density", "saddle", "corrdim", "lyapunov"}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, prefix: str) -> dict:
        """Keys under `prefix.`, with the prefix stripped, merged over
        unprefixed keys of the same name."""
        plain = {k: v for k, v in self.values.items() if "." not in k}
        dotted = {k[len(prefix) + 1:]: v for k, v in self.values.items()
                  if k.startswith(prefix + ".")}
        plain.update(dotted)
        return plain

    def require(self, key, subcommand=None):
        sec = self.section(subcommand) if subcommand else self.values
        if key not in sec or sec[key] in ("", None):
            raise ValidationError(key)
        return sec[key]


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.split("#", 1)[0].strip()
        if not key:
            raise ParseError(line_no, "empty key")
        values[key] = val
    return ExperimentConfig(values=values)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def as_float(cfg_value, key: str, line_hint: int = 0) -> float:
    try:
        return float(cfg_value)
    except (TypeError, ValueError):
        raise ParseError(line_hint, f"malformed number for {key}: "
                                    f"{cfg_value!r}") from None


def as_int(cfg_value, key: str, line_hint: int = 0) -> int:
    try:
        return int(str(cfg_value), 10)
    except (TypeError, ValueError):
        raise ParseError(line_hint, f"malformed integer for {key}: "
                                    f"{cfg_value!r}") from None
