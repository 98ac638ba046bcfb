"""Line-protocol server and CLI entry point.

Serves the evaluation wire protocol on stdin/stdout: one JSON request line
in, one JSON response line out, staying alive across requests.  Anything a
request trips over -- bad JSON, inconsistent document, missing dataset --
comes back as a failed-status line, never a dead process.  Only protocol
lines go to stdout; diagnostics go to stderr.

`--toy-dataset DIR` generates the deterministic synthetic paired dataset
used in CI and exits.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import make_toy_dataset
from .session import handle_request


def serve(stdin=None, stdout=None, device: str = "cpu") -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request line must be a JSON object")
            response = handle_request(request, device=device)
        except Exception as exc:
            response = {
                "l_gan": 0.0,
                "l_l1": 0.0,
                "status": "failed",
                "message": f"{type(exc).__name__}: {exc}",
            }
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="evounet-trainer",
        description="Mini-train/mini-validation evaluator speaking the line protocol.",
    )
    parser.add_argument(
        "--toy-dataset",
        metavar="DIR",
        help="write deterministic train.npz/val.npz into DIR and exit",
    )
    parser.add_argument("--images", type=int, default=4, help="toy dataset size")
    parser.add_argument("--resolution", type=int, default=64, help="toy image side")
    parser.add_argument("--seed", type=int, default=0, help="toy dataset seed")
    parser.add_argument("--device", default="cpu", help="torch device (default cpu)")
    args = parser.parse_args(argv)

    if args.toy_dataset:
        train, val = make_toy_dataset(
            args.toy_dataset, images=args.images, resolution=args.resolution, seed=args.seed
        )
        print(train)
        print(val)
        return 0

    serve(device=args.device)
    return 0


if __name__ == "__main__":
    sys.exit(main())
