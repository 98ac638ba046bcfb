import json
import subprocess
import sys

import pytest

from evounet_trainer.data import make_toy_dataset


def engine_cli(*args: str) -> subprocess.CompletedProcess:
    """The search engine, consumed strictly through its CLI."""
    return subprocess.run(
        [sys.executable, "-m", "evounet", *args], capture_output=True, text=True
    )


def make_document(channels, skips, image_channels=3, resolution=32) -> dict:
    """Handcraft an architecture document per the published schema."""
    n = len(channels)
    layers = []
    side = resolution
    in_c = image_channels
    for k in range(1, n + 1):
        layers.append(
            dict(
                kind="downconv", index=k, in_channels=in_c, out_channels=channels[k - 1],
                in_resolution=side, out_resolution=side // 2, kernel=4, stride=2,
            )
        )
        in_c = channels[k - 1]
        side //= 2
    prev = channels[-1]
    for k in range(n, 0, -1):
        in_c = prev + (channels[k - 1] if k < n and skips[k - 1] else 0)
        out_c = channels[k - 2] if k >= 2 else image_channels
        layers.append(
            dict(
                kind="upconv", index=k, in_channels=in_c, out_channels=out_c,
                in_resolution=side, out_resolution=side * 2, kernel=4, stride=2,
            )
        )
        prev = out_c
        side *= 2
    genome = ",".join(map(str, channels)) + "|" + ",".join(map(str, skips))
    return dict(
        image_channels=image_channels,
        image_resolution=resolution,
        layers=layers,
        skips=list(skips),
        genome=genome,
    )


def make_request(document, seed=0, mini_epochs=1, batch_size=4, train_path="", val_path=""):
    return {
        "architecture": document,
        "genome": document["genome"],
        "lambda": 100.0,
        "train_budget": {"mini_epochs": mini_epochs, "batch_size": batch_size},
        "dataset": {"train_path": str(train_path), "val_path": str(val_path)},
        "seed": seed,
    }


@pytest.fixture(scope="session")
def toy32(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy32")
    train, val = make_toy_dataset(out, images=4, resolution=32, seed=5)
    return train, val


@pytest.fixture(scope="session")
def baseline_document():
    result = engine_cli(
        "decode", "--genome", "64,128,256,512,512,512,512,512|1,1,1,1,1,1,1",
        "--format", "document",
    )
    assert result.returncode == 0, result.stderr
    return json.loads(result.stdout)
