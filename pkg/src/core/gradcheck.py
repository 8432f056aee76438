"""
Finite-difference gradient check for the DIDA network.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.network import DIDANetwork, PreparedRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockCheck:
    """Worst relative error found in one parameter block"""
    name: str
    max_rel_error: float
    checked: int


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)


def check_gradients(network: DIDANetwork, items: Sequence[Tuple[PreparedRecord, int, float]],
                    l2: float = 0.0, h: float = 1e-5, max_entries: Optional[int] = None,
                    seed: int = 0, l2_scope: str = "all") -> List[BlockCheck]:
    """
    Compares analytic gradients with central differences (f(θ+h) − f(θ−h)) / 2h.

    Every entry of every parameter block is perturbed unless `max_entries` caps the number
    of (randomly chosen) entries per block.

    Args:
        network (DIDANetwork): Network whose parameters are perturbed in place and restored.
        items (Sequence[Tuple[PreparedRecord, int, float]]): Weighted training items.
        l2 (float): L2 coefficient included in the loss.
        l2_scope (str): Matrices under L2, "classifier" or "all".
        h (float): Finite-difference step.
        max_entries (Optional[int]): Per-block cap on checked entries.
        seed (int): Seed for choosing entries when capped.

    Returns:
        List[BlockCheck]: One result per parameter block.
    """
    _, analytic = network.loss_and_gradients(items, l2=l2, l2_scope=l2_scope)
    rng = np.random.default_rng(seed)
    results = []
    for name in network.params.names:
        value = network.params[name]
        flat = value.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus = network.loss(items, l2=l2, l2_scope=l2_scope)
            flat[index] = original - h
            minus = network.loss(items, l2=l2, l2_scope=l2_scope)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic[name].reshape(-1)[index]), numeric))
        results.append(BlockCheck(name=name, max_rel_error=worst, checked=len(indices)))
        logger.debug(f"gradcheck {name}: max relative error {worst:.2e} over {len(indices)} entries")
    return results


def worst_block(results: Sequence[BlockCheck]) -> BlockCheck:
    return max(results, key=lambda r: r.max_rel_error)
