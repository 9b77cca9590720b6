"""Fixed whole-graph feature extractor for the non-learned baseline.

Summarizes a configuration's loop structure as two fixed-size "curves": the
running loop-extent products and a touched-memory proxy collected along
root-to-leaf paths, pooled over all loops, sorted, and resampled at evenly
spaced quantile positions. The output width is 2 x samples regardless of
graph size, so a plain MLP head can consume it.
"""

from __future__ import annotations

import numpy as np

from .graphs import AstGraph
from .synth import COL_EXTENT, COL_SUBTREE, TYPE_FOR

DEFAULT_SAMPLES = 20


def _quantile_resample(pool: list[float], samples: int) -> np.ndarray:
    if not pool:
        return np.zeros(samples, dtype=np.float64)
    values = np.sort(np.asarray(pool, dtype=np.float64))
    if values.size == 1:
        values = np.repeat(values, 2)
    positions = np.linspace(0.0, values.size - 1.0, samples)
    return np.interp(positions, np.arange(values.size), values)


def extract_curves(graph: AstGraph, samples: int = DEFAULT_SAMPLES,
                   extent_column: int = COL_EXTENT, subtree_column: int = COL_SUBTREE,
                   loop_type: int = TYPE_FOR) -> np.ndarray:
    """Fixed-width (2 x samples) curve vector for one graph.

    Walks loop nodes in topological order keeping, per node, the running
    product along its root path of (a) loop extents and (b) subtree_size x
    extent; every loop node contributes its running value to the pool of its
    curve. Pools are sorted, quantile-resampled at ``samples`` points, and
    log1p-compressed. Column positions follow the synth schema by default;
    ingested opaque data is read at columns 0 and 5 by the same convention.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    order = graph.topo_order()
    parent = graph.parent_array()
    is_loop = graph.node_types == loop_type
    running_extent = np.ones(graph.node_count, dtype=np.float64)
    running_memory = np.ones(graph.node_count, dtype=np.float64)
    extent_pool: list[float] = []
    memory_pool: list[float] = []
    for v in order:
        p = parent[v]
        ext = running_extent[p] if p >= 0 else 1.0
        mem = running_memory[p] if p >= 0 else 1.0
        if is_loop[v]:
            ext *= graph.features[v, extent_column]
            mem *= graph.features[v, subtree_column] * graph.features[v, extent_column]
            extent_pool.append(float(ext))
            memory_pool.append(float(mem))
        running_extent[v] = ext
        running_memory[v] = mem
    return np.log1p(np.concatenate([
        _quantile_resample(extent_pool, samples),
        _quantile_resample(memory_pool, samples),
    ]))
