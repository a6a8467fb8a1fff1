"""Versioned JSON checkpoints for trained models."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from rich.console import Console

from lesets.elemtable import ElementTable
from lesets.model import DeepSetsConfig, Model, ModelConfig, TargetScaler, build_model

console = Console()

CHECKPOINT_FORMAT = "lesets-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    model: Model
    schema_hash: str
    target_name: str | None = None


def save_checkpoint(model: Model, path: str | Path, table: ElementTable, target_name: str | None = None) -> Path:
    """Write model kind, config, target scaler and parameters as JSON.

    Floats are written with full repr precision, so loading reproduces
    predictions bit for bit.
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "node_dim": model.node_dim,
        "target_name": target_name,
        "schema_hash": table.schema_hash,
        "target_scaler": {"mean": model.target_scaler.mean, "std": model.target_scaler.std},
        "parameters": {
            name: {"shape": list(values.shape), "values": values.reshape(-1).tolist()}
            for name, values in model.state_dict().items()
        },
    }
    out.write_text(json.dumps(payload), encoding="utf-8")
    console.print(f"[dim]Checkpoint written to {out}[/dim]")
    return out


def load_checkpoint(path: str | Path, table: ElementTable | None = None) -> Checkpoint:
    """Rebuild a model from a checkpoint.

    Args:
        path: Checkpoint file.
        table: When given, its schema hash must match the one stored at training time.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On a malformed file, unsupported version or schema hash mismatch.
    """
    src = Path(path)
    if not src.exists():
        raise FileNotFoundError(f"Checkpoint not found: {src}")
    try:
        payload = json.loads(src.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed checkpoint {src}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{src} is not a lesets checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    if table is not None and payload["schema_hash"] != table.schema_hash:
        raise ValueError(
            f"element table schema mismatch: checkpoint {payload['schema_hash'][:12]}, table {table.schema_hash[:12]}"
        )

    kind = payload["kind"]
    config_cls = ModelConfig if kind == "lesets" else DeepSetsConfig
    model = build_model(kind, config_cls.from_dict(payload["config"]), node_dim=payload["node_dim"])
    state = {
        name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["parameters"].items()
    }
    model.load_state_dict(state)
    scaler = payload["target_scaler"]
    model.target_scaler = TargetScaler(mean=float(scaler["mean"]), std=float(scaler["std"]))
    return Checkpoint(model=model, schema_hash=payload["schema_hash"], target_name=payload.get("target_name"))
