"""Run configuration: built-in presets, YAML config file and flag overrides."""

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal

import yaml
from rich.console import Console

from lesets.model import DeepSetsConfig, Model, ModelConfig, build_model
from lesets.representation import TARGET_UNITS
from lesets.train import TrainConfig

console = Console()

ModelKind = Literal["lesets", "deepsets"]
MODEL_KINDS = ("lesets", "deepsets")

# Tuned settings per target property
PRESETS: dict[str, ModelConfig] = {
    "youngs": ModelConfig(conv_operator="GraphConv", n_conv_layers=2, n_fc_layers=3, hidden_dim=32, use_att=True),
    "bulk": ModelConfig(conv_operator="CGConv", n_conv_layers=3, n_fc_layers=3, hidden_dim=32, use_att=False),
    "rws": ModelConfig(conv_operator="CGConv", n_conv_layers=2, n_fc_layers=3, hidden_dim=32, use_att=False),
}
TARGET_PRESETS = {"youngs_modulus": "youngs", "bulk_modulus": "bulk", "rws": "rws"}
CONFIG_SECTIONS = ("run", "model", "deepsets", "train")


def default_config_paths() -> list[Path]:
    return [
        Path("lesets.yaml"),
        Path.home() / ".config" / "lesets" / "config.yaml",
    ]


def load_config(config_path: str | Path | None = None) -> dict:
    """Load the YAML config file, falling back to default locations.

    Args:
        config_path: Optional explicit path. Otherwise ``./lesets.yaml`` and
            ``~/.config/lesets/config.yaml`` are tried in order.

    Returns:
        Configuration dictionary. Empty dict if no config found.

    Raises:
        FileNotFoundError: If an explicit path does not exist.
        ValueError: If the file is not a mapping of known sections.
    """
    if config_path:
        path = Path(config_path).expanduser()
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        candidates = [path]
    else:
        candidates = [p for p in default_config_paths() if p.exists()]

    for path in candidates:
        console.print(f"[dim]Loading config from: {path}[/dim]")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise ValueError(f"bad config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"bad config {path}: expected sections {', '.join(CONFIG_SECTIONS)}")
        unknown = set(data) - set(CONFIG_SECTIONS)
        if unknown:
            raise ValueError(f"bad config {path}: unknown section(s) {', '.join(sorted(unknown))}")
        for name, section in data.items():
            if section is not None and not isinstance(section, dict):
                raise ValueError(f"bad config {path}: section {name!r} must be a mapping")
        return data

    return {}


def _section(config: dict, name: str) -> dict[str, Any]:
    return dict(config.get(name) or {})


def _unknown_keys(section: dict, allowed, name: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ValueError(f"bad config: unknown key(s) in {name}: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI run needs."""

    target: str
    preset: str
    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    deepsets: DeepSetsConfig = field(default_factory=DeepSetsConfig)
    model_kind: ModelKind = "lesets"
    data: Path | None = None
    out: Path = Path("output")
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.target not in TARGET_UNITS:
            raise ValueError(f"unknown target {self.target!r}; expected one of {', '.join(TARGET_UNITS)}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model_kind!r}; expected one of {', '.join(MODEL_KINDS)}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def model_factory(self, node_dim: int) -> Callable[[int], Model]:
        """Build a fresh model seeded per replicate."""
        base = self.model if self.model_kind == "lesets" else self.deepsets

        def factory(seed: int) -> Model:
            return build_model(self.model_kind, replace(base, seed=seed), node_dim=node_dim)

        return factory

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["data"] = str(self.data) if self.data else None
        data["out"] = str(self.out)
        return data


def resolve_run_config(
    file_config: dict | None = None,
    *,
    target: str | None = None,
    preset: str | None = None,
    model_kind: str | None = None,
    data: str | Path | None = None,
    out: str | Path | None = None,
    seed: int | None = None,
    threads: int | None = None,
    train_overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Merge flags over the config file over the preset over built-in defaults.

    The preset follows the target when neither a flag nor the file names one;
    the target follows the preset in the opposite case.

    Raises:
        ValueError: On an unknown preset, target, section key or a missing target.
    """
    file_config = file_config or {}
    run = _section(file_config, "run")
    _unknown_keys(run, ("target", "preset", "model", "data", "out", "seed", "threads"), "run")
    model_section = _section(file_config, "model")
    _unknown_keys(model_section, ModelConfig.__dataclass_fields__, "model")
    deepsets_section = _section(file_config, "deepsets")
    _unknown_keys(deepsets_section, DeepSetsConfig.__dataclass_fields__, "deepsets")
    train_section = _section(file_config, "train")
    _unknown_keys(train_section, TrainConfig.__dataclass_fields__, "train")

    target = target or run.get("target")
    preset = preset or run.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")
    if target is None and preset is not None:
        target = next(t for t, p in TARGET_PRESETS.items() if p == preset)
    if target is None:
        raise ValueError("no target given: pass --target or set run.target in the config file")
    if target not in TARGET_PRESETS:
        raise ValueError(f"unknown target {target!r}; expected one of {', '.join(TARGET_PRESETS)}")
    preset = preset or TARGET_PRESETS[target]

    seed = seed if seed is not None else int(run.get("seed", 0))
    model_config = ModelConfig.from_dict({**PRESETS[preset].to_dict(), **model_section, "seed": seed})
    deepsets_config = DeepSetsConfig.from_dict({**deepsets_section, "seed": seed})
    train_config = TrainConfig.from_dict({**train_section, **(train_overrides or {}), "seed": seed})

    data = data if data is not None else run.get("data")
    out = out if out is not None else run.get("out", "output")
    return RunConfig(
        target=target,
        preset=preset,
        model=model_config,
        train=train_config,
        deepsets=deepsets_config,
        model_kind=model_kind or run.get("model", "lesets"),
        data=Path(data).expanduser() if data else None,
        out=Path(out).expanduser(),
        seed=seed,
        threads=threads if threads is not None else int(run.get("threads", 1)),
    )
