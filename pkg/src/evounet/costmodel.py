"""Analytic cost model: multiply-accumulate count, parameters, memory.

Counting convention (calibrated against the original-generator reference
figures of 18147M FLOPs / 208 MB):

  * 1 FLOP = 1 multiply-accumulate, bias adds included, normalization and
    activation ops excluded.
  * Transposed convolutions are costed on their output grid with the same
    formula as convolutions.
  * Memory is parameter count x 4 bytes (32-bit weights), reported in MiB.
"""

from __future__ import annotations

from dataclasses import dataclass

from .decoder import ArchitectureGraph, LayerSpec

BYTES_PER_PARAM = 4


@dataclass(frozen=True)
class CostReport:
    """Totals over all layers of one architecture."""

    flops_m: float  # millions of MACs per input image
    params: int  # weight + bias scalar count
    memory_mib: float  # params * 4 bytes, in MiB

    def as_dict(self) -> dict:
        return {
            "flops_m": self.flops_m,
            "params": self.params,
            "memory_mib": self.memory_mib,
        }


def layer_cost(layer: LayerSpec) -> tuple[int, int]:
    """(macs, params) of one layer.

    macs   = k^2 * C_in * C_out * H_out * W_out  +  C_out * H_out * W_out
    params = k^2 * C_in * C_out  +  C_out
    """
    k2 = layer.kernel * layer.kernel
    out_px = layer.out_resolution * layer.out_resolution
    weight_macs = k2 * layer.in_channels * layer.out_channels * out_px
    bias_macs = layer.out_channels * out_px
    params = k2 * layer.in_channels * layer.out_channels + layer.out_channels
    return weight_macs + bias_macs, params


def cost_report(graph: ArchitectureGraph) -> CostReport:
    """Sum layer_cost over every layer of the graph."""
    total_macs = 0
    total_params = 0
    for layer in graph.layers:
        macs, params = layer_cost(layer)
        total_macs += macs
        total_params += params
    return CostReport(
        flops_m=total_macs / 1e6,
        params=total_params,
        memory_mib=total_params * BYTES_PER_PARAM / 2**20,
    )
