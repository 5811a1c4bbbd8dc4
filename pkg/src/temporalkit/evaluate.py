"""Clip and dense evaluation plus the text prediction interchange format.

Clip mode scores one centered view per video. Dense mode runs the full
multi-clip/multi-crop/multi-scale plan and averages class probabilities over
views, so the ensemble lives in probability space. Prediction files are
plain text, one line per video: id,p_0,...,p_{C-1} with 9 significant digits.
"""

from __future__ import annotations

import numpy as np

from .metrics import LabelMatrix, PredictionMatrix
from .model import backbone_forward, predict_clip
from .sampling import dense_test_plan
from .videofile import materialize_view

_FORWARD_CHUNK = 16


def _view_probs(frames, views, params, mcfg) -> np.ndarray:
    """[num_views, C] probabilities for one video's views."""
    clips = np.stack([materialize_view(frames, v) for v in views])
    probs = []
    for lo in range(0, len(clips), _FORWARD_CHUNK):
        logits = backbone_forward(clips[lo : lo + _FORWARD_CHUNK], params, mcfg, training=False)
        probs.append(predict_clip(logits))
    return np.concatenate(probs, axis=0)


def evaluate_predictions(cfg, params, mcfg, data, mode: str = "clip") -> PredictionMatrix:
    """Score every video in `data` with the configured test plan."""
    from .train import clip_spec_from_config  # local import to avoid a cycle

    if mode not in ("clip", "dense"):
        raise ValueError(f"unknown eval mode {mode!r}")
    spec = clip_spec_from_config(cfg)
    rows = []
    for idx in range(len(data)):
        f = data.num_frames(idx)
        if mode == "clip":
            plan = dense_test_plan(f, spec, num_clips=1, crops_per_clip=1,
                                   scales=(cfg.scales[0],), crop_size=cfg.crop)
        else:
            plan = dense_test_plan(f, spec, num_clips=10, crops_per_clip=3,
                                   scales=cfg.scales, crop_size=cfg.crop)
        probs = _view_probs(data.frames(idx), list(plan), params, mcfg)
        rows.append(probs.mean(axis=0))
    return PredictionMatrix(data.ids, np.stack(rows))


def write_predictions(path, preds: PredictionMatrix) -> None:
    with open(path, "w") as fh:
        for sample_id, row in zip(preds.ids, preds.probs):
            fh.write(sample_id + "," + ",".join(f"{p:.9g}" for p in row) + "\n")


def read_predictions(path) -> PredictionMatrix:
    ids, rows = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected id,p_0,...")
            ids.append(parts[0])
            rows.append([float(tok) for tok in parts[1:]])
    return PredictionMatrix(tuple(ids), np.array(rows))


def labels_for_ids(label_matrix: LabelMatrix, ids) -> LabelMatrix:
    """Reorder a label matrix to a prediction file's id order."""
    index = {sid: i for i, sid in enumerate(label_matrix.ids)}
    try:
        order = [index[sid] for sid in ids]
    except KeyError as exc:
        raise ValueError(f"no labels for prediction id {exc.args[0]!r}") from exc
    return LabelMatrix(tuple(ids), label_matrix.labels[order])
