"""Staged training loop.

Each stage owns an Adam optimizer at its initial learning rate, halved
every `halve_every` epochs. When a stage activates a finer estimator level
than any previous stage, the new level's estimators start from the weights
of the level just above it. Runs are deterministic for a fixed seed up to
framework nondeterminism (single-threaded CPU training reproduces
bit-identically in practice).
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .config import NetConfig, StageSchedule
from .data import ManifestDataset
from .model import SpeckleFlowNet, relative_l2_loss


def _batches(n_items: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n_items, generator=generator).tolist()
    for start in range(0, n_items, batch_size):
        yield order[start : start + batch_size]


def evaluate(model: SpeckleFlowNet, batch: dict, min_level: int, refiners: bool) -> float:
    model.eval()
    with torch.no_grad():
        out = model(batch["ref"], batch["sample"], min_level=min_level, refiners=refiners)
        loss = relative_l2_loss(
            out["displacement"], out["transmission"], batch["disp"], batch["trans"]
        )
    return float(loss)


def train(
    model: SpeckleFlowNet,
    dataset_dir,
    schedule: StageSchedule,
    seed: int = 0,
    out_dir=None,
    log_every: int = 50,
) -> dict:
    """Run the staged schedule; returns per-stage step losses and final
    train/validation losses, and writes checkpoints when out_dir is set."""
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    train_data = ManifestDataset(dataset_dir, "train")
    try:
        val_data = ManifestDataset(dataset_dir, "validation")
        val_batch = val_data.stacked() if len(val_data) else None
    except (KeyError, ValueError):
        val_batch = None
    cache = train_data.stacked()

    history = {"stages": []}
    handoffs = []
    deepest_ready = None  # finest level trained by any earlier stage
    for stage in schedule.stages:
        if deepest_ready is not None and stage.min_level < deepest_ready:
            for level in range(deepest_ready - 1, stage.min_level - 1, -1):
                model.warm_start_level(level, level + 1)
                handoffs.append((level, level + 1))
        deepest_ready = (
            stage.min_level if deepest_ready is None else min(deepest_ready, stage.min_level)
        )
        optimizer = torch.optim.Adam(model.parameters(), lr=stage.learning_rate)
        step_losses = []
        step = 0
        for epoch in range(stage.epochs):
            lr = stage.learning_rate * 0.5 ** (epoch // stage.halve_every)
            for group in optimizer.param_groups:
                group["lr"] = lr
            for idx in _batches(len(train_data), stage.batch_size, generator):
                model.train()
                optimizer.zero_grad()
                out = model(
                    cache["ref"][idx],
                    cache["sample"][idx],
                    min_level=stage.min_level,
                    refiners=stage.refiners,
                )
                loss = relative_l2_loss(
                    out["displacement"], out["transmission"],
                    cache["disp"][idx], cache["trans"][idx],
                )
                loss.backward()
                optimizer.step()
                step_losses.append(float(loss.detach()))
                step += 1
        record = {
            "name": stage.name,
            "min_level": stage.min_level,
            "refiners": stage.refiners,
            "steps": step,
            "step_losses": step_losses,
            "final_train_loss": evaluate(model, cache, stage.min_level, stage.refiners),
        }
        if val_batch is not None:
            record["final_validation_loss"] = evaluate(
                model, val_batch, stage.min_level, stage.refiners
            )
        history["stages"].append(record)
        history["handoffs"] = handoffs
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            torch.save(
                {"config": model.cfg, "state_dict": model.state_dict(), "stage": stage.name},
                out / f"checkpoint_{stage.name}.pt",
            )
    if out_dir is not None:
        slim = {
            "stages": [
                {k: v for k, v in s.items() if k != "step_losses"}
                for s in history["stages"]
            ]
        }
        (Path(out_dir) / "history.json").write_text(json.dumps(slim, indent=1))
    return history


def load_checkpoint(path) -> SpeckleFlowNet:
    payload = torch.load(path, weights_only=False)
    model = SpeckleFlowNet(payload["config"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
