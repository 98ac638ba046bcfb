"""Per-request training session: mini-train then mini-validation.

The generator comes from the request's architecture document; the
discriminator, optimizer, and schedule are the fixed settings in
defaults.json (mirroring the standard paired image-translation baseline:
Adam at 2e-4 with beta1 0.5, BCE adversarial loss, batch normalization).

Per request, all randomness (weight init, data order, dropout) is seeded
from the request's seed, weights are trained from scratch, and the
validation pass reports per-image mean loss components:

    l_gan  adversarial generator loss, -log D(x, G(x)) in its stable
           with-logits form (the non-saturating equivalent of the minimax
           generator objective, as used by the comparison baseline)
    l_l1   mean absolute error between G(x) and the target, in tanh space
"""

from __future__ import annotations

import time

import numpy as np
import torch
import torch.nn.functional as F

from .data import load_pairs
from .model import (
    DocumentError,
    GeneratorFromDocument,
    PatchDiscriminator,
    load_defaults,
)


class RequestError(ValueError):
    """Evaluation request is malformed or violates its invariants."""


def _batches(count: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(count, generator=generator)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


class TrainerSession:
    """One evaluation: build networks, mini-train, mini-validate."""

    def __init__(self, request: dict, device: str = "cpu"):
        try:
            self.document = request["architecture"]
            self.lambda_ = float(request["lambda"])
            budget = request["train_budget"]
            self.mini_epochs = int(budget["mini_epochs"])
            self.batch_size = int(budget.get("batch_size", 1))
            dataset = request["dataset"]
            self.train_path = dataset["train_path"]
            self.val_path = dataset["val_path"]
            self.seed = int(request["seed"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RequestError(f"malformed request: {exc}")
        if self.lambda_ < 0:
            raise RequestError(f"lambda must be >= 0, got {self.lambda_}")
        if self.mini_epochs < 1:
            raise RequestError(f"mini_epochs must be >= 1, got {self.mini_epochs}")
        if self.batch_size < 1:
            raise RequestError(f"batch_size must be >= 1, got {self.batch_size}")

        self.device = torch.device(device)
        self.settings = load_defaults()

        torch.manual_seed(self.seed)
        np.random.seed(self.seed % 2**32)

        resolution = int(self.document.get("image_resolution", 0))
        if resolution < PatchDiscriminator.MIN_RESOLUTION:
            raise DocumentError(
                f"image resolution {resolution} is below the discriminator's "
                f"minimum {PatchDiscriminator.MIN_RESOLUTION}"
            )
        self.generator = GeneratorFromDocument(
            self.document, dropout=self.settings["decoder_dropout"]
        ).to(self.device)
        self.discriminator = PatchDiscriminator(
            image_channels=int(self.document["image_channels"]),
            base=self.settings["discriminator_base_channels"],
        ).to(self.device)

    def run(self) -> dict:
        """Train for mini_epochs, validate once, return response fields."""
        start = time.time()
        train_x, train_y = load_pairs(self.train_path)
        val_x, val_y = load_pairs(self.val_path)

        opt_cfg = self.settings["optimizer"]
        betas = (opt_cfg["beta1"], opt_cfg["beta2"])
        opt_g = torch.optim.Adam(self.generator.parameters(), lr=opt_cfg["lr"], betas=betas)
        opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=opt_cfg["lr"], betas=betas)
        d_weight = self.settings["discriminator_loss_weight"]

        order_rng = torch.Generator().manual_seed(self.seed)
        self.generator.train()
        self.discriminator.train()
        for _ in range(self.mini_epochs):
            for batch in _batches(len(train_x), self.batch_size, order_rng):
                x = train_x[batch].to(self.device)
                y = train_y[batch].to(self.device)

                fake = self.generator(x)

                # Discriminator: real pairs up, generated pairs down.
                opt_d.zero_grad(set_to_none=True)
                real_logits = self.discriminator(x, y)
                fake_logits = self.discriminator(x, fake.detach())
                loss_d = d_weight * (
                    F.binary_cross_entropy_with_logits(
                        real_logits, torch.ones_like(real_logits)
                    )
                    + F.binary_cross_entropy_with_logits(
                        fake_logits, torch.zeros_like(fake_logits)
                    )
                )
                loss_d.backward()
                opt_d.step()

                # Generator: fool the discriminator + lambda-weighted L1.
                opt_g.zero_grad(set_to_none=True)
                fake_logits = self.discriminator(x, fake)
                loss_gan = F.binary_cross_entropy_with_logits(
                    fake_logits, torch.ones_like(fake_logits)
                )
                loss_l1 = F.l1_loss(fake, y)
                (loss_gan + self.lambda_ * loss_l1).backward()
                opt_g.step()

        l_gan, l_l1 = self._validate(val_x, val_y)
        elapsed = time.time() - start
        return {
            "l_gan": l_gan,
            "l_l1": l_l1,
            "status": "ok",
            "message": (
                f"generator_params={self.generator.parameter_count()} "
                f"train_s={elapsed:.1f}"
            ),
        }

    @torch.no_grad()
    def _validate(self, val_x: torch.Tensor, val_y: torch.Tensor) -> tuple[float, float]:
        """Per-image mean loss components over the validation set."""
        self.generator.eval()
        self.discriminator.eval()
        gan_losses = []
        l1_losses = []
        for i in range(len(val_x)):
            x = val_x[i : i + 1].to(self.device)
            y = val_y[i : i + 1].to(self.device)
            fake = self.generator(x)
            logits = self.discriminator(x, fake)
            gan_losses.append(
                F.binary_cross_entropy_with_logits(
                    logits, torch.ones_like(logits)
                ).item()
            )
            l1_losses.append(F.l1_loss(fake, y).item())
        return float(np.mean(gan_losses)), float(np.mean(l1_losses))


def handle_request(request: dict, device: str = "cpu") -> dict:
    """Evaluate one request; any failure becomes a failed-status response."""
    try:
        return TrainerSession(request, device=device).run()
    except Exception as exc:  # the serving loop must survive anything
        return {
            "l_gan": 0.0,
            "l_l1": 0.0,
            "status": "failed",
            "message": f"{type(exc).__name__}: {exc}",
        }
