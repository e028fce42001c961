#!/usr/bin/env python3
"""
Schedule generator for the standard experiments.

Usage:
    python scripts/make_schedule.py alternating --out configs/alternating.yaml
    python scripts/make_schedule.py cycling --out configs/cycling.yaml --seed 3
    python scripts/make_schedule.py alternating --out switch.yaml --switch 3:140:altered
    make_schedule smoke --out smoke.yaml  # If installed as package

Schedules:
    smoke        one nominal run
    alternating  3 nominal, 3 altered, repeated twice (12 runs)
    cycling      2 runs per mode cycling nominal, loaded, altered, 5 cycles (30 runs)
"""
import argparse
import dataclasses
import json
import logging
from pathlib import Path

import yaml

from exprec.utils.configurations import ExperimentSchedule, ScheduledRun

logger = logging.getLogger(__name__)


def alternating(block: int = 3, repeats: int = 2) -> list[str]:
    return (["nominal"] * block + ["altered"] * block) * repeats


def cycling(per_mode: int = 2, cycles: int = 5) -> list[str]:
    return [mode for _ in range(cycles) for mode in ("nominal", "loaded", "altered") for _ in range(per_mode)]


SCHEDULES = {
    "smoke": lambda: ["nominal"],
    "alternating": alternating,
    "cycling": cycling,
}


def build_schedule(
    name: str, method: str = "proposed", seed: int = 0, switches: dict[int, tuple[int, str]] | None = None
) -> dict:
    """Schedule file content for one of the standard experiments.

    Args:
        switches: run index -> (vertex, mode) for runs that change condition part way round.
    """
    switches = switches or {}
    runs = [
        ScheduledRun(i, mode, *switches.get(i, (None, None)))
        for i, mode in enumerate(SCHEDULES[name](), start=1)
    ]
    # Validates method and mode names before anything is written
    schedule = ExperimentSchedule(runs=runs, method=method, seed=seed)
    return remove_none_values({
        "schedule": {
            "method": schedule.method,
            "seed": schedule.seed,
            "runs": [dataclasses.asdict(run) for run in schedule.runs],
        }
    })


def parse_switch(text: str) -> tuple[int, tuple[int, str]]:
    """`RUN:VERTEX:MODE`, e.g. `3:140:altered`."""
    try:
        run, vertex, mode = text.split(":")
        return int(run), (int(vertex), mode)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected RUN:VERTEX:MODE, got `{text}`")


def remove_none_values(d):
    """Recursively remove None values from dictionaries."""
    if isinstance(d, dict):
        return {k: remove_none_values(v) for k, v in d.items() if v is not None}
    elif isinstance(d, list):
        return [remove_none_values(item) for item in d]
    else:
        return d


def save_config(config: dict, filepath: str):
    """Save a schedule to JSON or YAML, chosen by the file suffix."""
    path = Path(filepath)
    suffix = path.suffix.lower()
    if suffix not in ('.json', '.yaml', '.yml'):
        raise ValueError(f"Unsupported file format `{path.suffix}`, use .json or .yaml")
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, 'w') as f:
        if suffix == '.json':
            json.dump(config, f, indent=2)
        else:
            yaml.safe_dump(config, f, default_flow_style=False, sort_keys=False)

    runs = config["schedule"]["runs"]
    logger.info(f"Schedule with {len(runs)} runs saved to {filepath}")


def main():
    logging.basicConfig(level=logging.INFO, format='%(levelname)s: %(message)s')
    parser = argparse.ArgumentParser(description="Write one of the standard experiment schedules")
    parser.add_argument("schedule", choices=sorted(SCHEDULES))
    parser.add_argument("--out", required=True, help="Target .yaml or .json file")
    parser.add_argument("--method", default="proposed")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--switch", type=parse_switch, action="append", default=[], help="RUN:VERTEX:MODE")
    args = parser.parse_args()
    save_config(build_schedule(args.schedule, args.method, args.seed, dict(args.switch)), args.out)


if __name__ == "__main__":
    main()
