"""Run settings: TOML config file, environment variables, and flag overrides.

Precedence is flags > environment > config file > built-in defaults. The
environment supplies deployment secrets (endpoint, token); the config file
holds stage parameters; flags win for one-off runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

ENV_PREFIX = "MATHSYNTH_"

ENV_KEYS = {
    "backend": "MATHSYNTH_BACKEND",
    "endpoint": "MATHSYNTH_ENDPOINT",
    "api_token": "MATHSYNTH_API_TOKEN",
    "model": "MATHSYNTH_MODEL",
    "parallelism": "MATHSYNTH_PARALLELISM",
}


@dataclass
class Settings:
    # gateway
    backend: str = "mock"  # "mock" or "http"
    endpoint: str = ""
    api_token: str = ""
    model: str = ""
    parallelism: int = 8
    max_retries: int = 3
    retry_base_delay: float = 0.5
    # randomness
    seed: int = 0
    # augmentation
    rounds: int = 3
    fan_out: int | None = None
    templates: list[str] = field(default_factory=list)  # empty = all four
    augment_temperature: float = 0.7
    # back-translation
    backtranslate_temperature: float = 0.7
    # solving
    n_candidates: int = 3
    solve_temperature: float = 0.7
    max_cells: int = 8
    max_calls: int = 10
    max_tokens: int = 2048
    # executor
    cell_timeout: float = 10.0
    session_budget: float = 120.0
    output_cap: int = 65536
    # filtering
    consistency_mode: str = "strict"
    require_rederived_match: bool = False

    _SECTIONS = {
        "gateway": (
            "backend",
            "endpoint",
            "api_token",
            "model",
            "parallelism",
            "max_retries",
            "retry_base_delay",
        ),
        "augment": ("rounds", "fan_out", "templates", "augment_temperature"),
        "backtranslate": ("backtranslate_temperature",),
        "solve": (
            "n_candidates",
            "solve_temperature",
            "max_cells",
            "max_calls",
            "max_tokens",
        ),
        "executor": ("cell_timeout", "session_budget", "output_cap"),
        "filter": ("consistency_mode", "require_rederived_match"),
        "run": ("seed",),
    }

    def apply_file(self, path: str | Path) -> None:
        payload = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(self)}
        for section, keys in self._SECTIONS.items():
            table = payload.get(section, {})
            if not isinstance(table, Mapping):
                raise ValueError(f"config section [{section}] must be a table")
            for key, value in table.items():
                if key not in keys:
                    raise ValueError(f"unknown config key {section}.{key}")
                setattr(self, key, value)
        # Also accept top-level keys for flat configs.
        for key, value in payload.items():
            if key in known and not isinstance(value, Mapping):
                setattr(self, key, value)

    def apply_env(self, environ: Mapping[str, str] | None = None) -> None:
        environ = os.environ if environ is None else environ
        for attr, env_key in ENV_KEYS.items():
            raw = environ.get(env_key)
            if raw is None:
                continue
            current = getattr(self, attr)
            if isinstance(current, int) and not isinstance(current, bool):
                setattr(self, attr, int(raw))
            else:
                setattr(self, attr, raw)

    def apply_flags(self, overrides: Mapping[str, Any]) -> None:
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(self, key):
                raise ValueError(f"unknown setting {key!r}")
            setattr(self, key, value)

    @classmethod
    def resolve(
        cls,
        config_path: str | Path | None = None,
        flag_overrides: Mapping[str, Any] | None = None,
        environ: Mapping[str, str] | None = None,
    ) -> "Settings":
        settings = cls()
        if config_path is not None:
            settings.apply_file(config_path)
        settings.apply_env(environ)
        if flag_overrides:
            settings.apply_flags(flag_overrides)
        return settings
