"""Command-line entry points for training and inference."""

from __future__ import annotations

import argparse
import json

from .config import NetConfig, Stage, StageSchedule, default_schedule
from .infer import infer_pair
from .model import SpeckleFlowNet
from .train import load_checkpoint, train


def _net_config(args) -> NetConfig:
    return NetConfig(
        input_size=args.input_size,
        max_level=args.levels,
        base_channels=args.base_channels,
        max_channels=args.max_channels,
        search_range=args.search_range,
        estimator_hidden=args.hidden,
        refiner_hidden=args.hidden,
    )


def train_main(argv=None):
    parser = argparse.ArgumentParser(description="Train the speckle tracking network.")
    parser.add_argument("--manifest-dir", required=True, help="Dataset directory.")
    parser.add_argument("--out", required=True, help="Checkpoint/history directory.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--input-size", type=int, default=64)
    parser.add_argument("--levels", type=int, default=4)
    parser.add_argument("--base-channels", type=int, default=8)
    parser.add_argument("--max-channels", type=int, default=32)
    parser.add_argument("--search-range", type=int, default=3)
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--epochs", type=int, nargs=3, default=(400, 600, 500),
                        metavar=("S1", "S2", "S3"))
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--stage", choices=["1", "2", "3", "all"], default="all",
                        help="Run a single stage or the whole schedule.")
    args = parser.parse_args(argv)

    cfg = _net_config(args)
    model = SpeckleFlowNet(cfg)
    schedule = default_schedule(tuple(args.epochs), (args.batch_size,) * 3)
    if args.stage != "all":
        schedule = StageSchedule((schedule.stages[int(args.stage) - 1],))
    print(f"parameters: {model.parameter_count}")
    history = train(model, args.manifest_dir, schedule, seed=args.seed, out_dir=args.out)
    for stage in history["stages"]:
        line = {k: v for k, v in stage.items() if k != "step_losses"}
        print(json.dumps(line))


def infer_main(argv=None):
    parser = argparse.ArgumentParser(description="Predict displacement and transmission.")
    parser.add_argument("--model", required=True, help="Checkpoint file.")
    parser.add_argument("--ref", required=True)
    parser.add_argument("--sample", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--no-refiners", action="store_true")
    args = parser.parse_args(argv)

    model = load_checkpoint(args.model)
    paths = infer_pair(
        model, args.ref, args.sample, args.out, refiners=not args.no_refiners
    )
    print(json.dumps(paths))


if __name__ == "__main__":
    train_main()
