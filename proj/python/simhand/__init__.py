"""Hand-pair mining and weighted contrastive training — python surface.

The compiled extension lives at ``simhand._simhand`` when installed as a
wheel, or as a top-level ``_simhand`` when running against a CMake build tree
(put the build's bindings directory on ``PYTHONPATH``).
"""

try:
    from simhand import _simhand as _core  # installed layout
except ImportError:  # pragma: no cover - build-tree layout
    import _simhand as _core

PcaModel = _core.PcaModel
adaptive_weights = _core.adaptive_weights
fit_pca = _core.fit_pca
generate_corpus = _core.generate_corpus
mine_positives = _core.mine_positives
mirror_keypoints = _core.mirror_keypoints
mpjpe = _core.mpjpe
pck_auc = _core.pck_auc
topk = _core.topk
weighted_ntxent = _core.weighted_ntxent

__all__ = [
    "PcaModel",
    "adaptive_weights",
    "fit_pca",
    "generate_corpus",
    "mine_positives",
    "mirror_keypoints",
    "mpjpe",
    "pck_auc",
    "topk",
    "weighted_ntxent",
]
