"""Fair graph augmentation for bipartite recommenders."""

import json as _json

from ._fairaug import (  # noqa: F401
    ConfigError,
    ContractError,
    DataError,
    NumericError,
    __version__,
    canonical_config,
    config_hash,
    jaccard,
    ndcg_at_k,
    smooth_ndcg,
    split_sizes,
    wilcoxon_signed_rank,
)
from . import _fairaug


def _runner(name):
    native = getattr(_fairaug, name)

    def run(config, **kwargs):
        """Run with a config given as a dict or JSON string; returns the report as a dict."""
        text = config if isinstance(config, str) else _json.dumps(config)
        return _json.loads(native(text, **kwargs))

    run.__name__ = name
    return run


run_benchmark = _runner("run_benchmark")
run_policy_grid = _runner("run_policy_grid")
run_psi_sweep = _runner("run_psi_sweep")
run_overlap = _runner("run_overlap")
