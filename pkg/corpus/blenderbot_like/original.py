"""Encoder block stand-in: per-stage debug logging on a compiled module."""

import logging

import torch

logger = logging.getLogger("blenderbot_like")


class EncoderBlock(torch.nn.Module):
    def __init__(self, scale):
        super().__init__()
        self.scale = scale

    def forward(self, hidden):
        scaled = hidden * self.scale
        logger.debug("scaled input")
        normed = scaled - scaled.mean()
        logger.debug("normalized")
        boosted = torch.relu(normed) + scaled
        logger.debug("activation done")
        return boosted / 2


model = EncoderBlock(1.5)
compiled = torch.compile(model)
