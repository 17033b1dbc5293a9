"""
Per-epoch sampling: every positive of the split plus neg_ratio negatives
per positive, shuffled. Deterministic for a given (seed, epoch).
"""

import logging
from typing import List

import numpy as np

from plumenet.data.manifest import DatasetManifest
from plumenet.errors import DataError

logger = logging.getLogger(__name__)


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def epoch_sampler(manifest: DatasetManifest, split: str, neg_ratio: int,
                  rng: np.random.Generator) -> List[str]:
    """Ordered entry ids for one epoch"""
    entries = manifest.split(split)
    if not entries:
        raise DataError(f"split '{split}' is empty")
    positives = [e.id for e in entries if e.is_plume]
    negatives = [e.id for e in entries if not e.is_plume]
    if not positives:
        raise DataError(f"split '{split}' has no positive entries")

    wanted = neg_ratio * len(positives)
    if wanted == 0:
        chosen = []
    elif not negatives:
        logger.warning(f"[DATA] Split '{split}' has no negatives; epoch uses positives only")
        chosen = []
    elif wanted <= len(negatives):
        idx = rng.choice(len(negatives), size=wanted, replace=False)
        chosen = [negatives[i] for i in idx]
    else:
        logger.warning(
            f"[DATA] Split '{split}': {wanted} negatives wanted, {len(negatives)} available; "
            f"sampling with replacement"
        )
        idx = rng.choice(len(negatives), size=wanted, replace=True)
        chosen = [negatives[i] for i in idx]

    ids = positives + chosen
    order = rng.permutation(len(ids))
    return [ids[i] for i in order]
