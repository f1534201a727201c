"""scikit-learn style wrappers around the scorer and the object map."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import CameraIntrinsics
from .pipeline import FrameInput, process_frame
from .scoring import DepthRange, ScoreWeights, objectness_scores
from .sim import DEFAULT_INTRINSICS
from .store import ObjectStore


class ObjectnessScorer(TransformerMixin, BaseEstimator):
    """Maps ``(class probability, distance)`` rows to objectness scores.

    Stateless; ``fit`` only validates the hyperparameters and input shape.
    """

    def __init__(self, alpha=0.4, d_min=0.8, d_max=3.0):
        self.alpha = alpha
        self.d_min = d_min
        self.d_max = d_max

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"X: expected 2 columns (probability, distance), got {X.shape[1]}")
        self.depth_range_ = DepthRange(self.d_min, self.d_max)
        self.weights_ = ScoreWeights(self.alpha)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X: expected {self.n_features_in_} columns, got {X.shape[1]}")
        return objectness_scores(X[:, 0], X[:, 1], self.depth_range_, self.weights_)[:, None]


class ObjectMapper(BaseEstimator):
    """Online object map fed with :class:`FrameInput` sequences.

    ``fit`` starts a fresh map, ``partial_fit`` keeps extending it.
    ``predict`` labels 3D query points with the class of the nearest
    maintained object.
    """

    def __init__(self, intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS, alpha=0.4, d_min=0.8, d_max=3.0,
                 iou_threshold=0.9, k=3, policy="objectness", search="knn"):
        self.intrinsics = intrinsics
        self.alpha = alpha
        self.d_min = d_min
        self.d_max = d_max
        self.iou_threshold = iou_threshold
        self.k = k
        self.policy = policy
        self.search = search

    def _new_store(self) -> ObjectStore:
        return ObjectStore(DepthRange(self.d_min, self.d_max), ScoreWeights(self.alpha),
                           iou_threshold=self.iou_threshold, k=self.k, policy=self.policy, search=self.search)

    def fit(self, frames, y=None):
        for attr in ("store_", "results_", "last_frame_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(frames)

    def partial_fit(self, frames, y=None):
        if isinstance(frames, FrameInput):
            frames = [frames]
        if not hasattr(self, "store_"):
            self.store_ = self._new_store()
            self.results_ = []
            self.last_frame_ = None
        for frame in frames:
            if self.last_frame_ is not None and frame.frame_index <= self.last_frame_:
                raise ValueError(f"frame_index: {frame.frame_index} does not follow {self.last_frame_}")
            self.results_.append(process_frame(self.store_, frame, self.intrinsics))
            self.last_frame_ = frame.frame_index
        return self

    def predict(self, X):
        check_is_fitted(self, "store_")
        X = check_array(X)
        if X.shape[1] != 3:
            raise ValueError(f"X: expected 3 columns (x, y, z), got {X.shape[1]}")
        labels = np.empty(len(X), dtype=object)
        for i, q in enumerate(X):
            hit = self.store_.search_knn(q, 1)
            labels[i] = hit[0].class_id if hit else None
        return labels

    def snapshot(self):
        check_is_fitted(self, "store_")
        return self.store_.snapshot()

    @property
    def n_objects_(self) -> int:
        check_is_fitted(self, "store_")
        return len(self.store_)
