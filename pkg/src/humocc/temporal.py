"""Historical BEV feature queue, ego-motion alignment and channel-to-height reshaping."""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

import numpy as np

from .core import BevFeatureMap, Se3Pose
from .errors import IndivisibleChannelsError, NonMonotonicTimeError, ShapeMismatchError
from .geometry import warp_bev

DEFAULT_HISTORY = 1


class QueueEntry(NamedTuple):
    timestamp: float
    pose: Se3Pose
    feat: BevFeatureMap


class FeatureQueue:
    """Bounded history of timestamped BEV maps; oldest entries are evicted first.

    Poses are world-from-ego and must be gravity aligned.
    """

    def __init__(self, capacity=DEFAULT_HISTORY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._entries = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._entries)

    @property
    def entries(self):
        return tuple(self._entries)

    def push(self, t, pose: Se3Pose, feat: BevFeatureMap):
        if self._entries and not t > self._entries[-1].timestamp:
            raise NonMonotonicTimeError(
                f"timestamp {t} is not after newest entry {self._entries[-1].timestamp}")
        self._entries.append(QueueEntry(float(t), pose, feat))
        return self


def relative_motion(current_pose: Se3Pose, past_pose: Se3Pose) -> Se3Pose:
    """Transform taking current-ego coordinates into the past ego frame."""
    return past_pose.inverse() @ current_pose


def align_history(q: FeatureQueue, current_pose: Se3Pose):
    """Warp every stored map into the current ego frame, newest first."""
    return [warp_bev(e.feat, relative_motion(current_pose, e.pose))
            for e in reversed(q.entries)]


def concat_temporal(current: BevFeatureMap, history, k=None) -> BevFeatureMap:
    """Stack ``[current, history newest-first]`` along channels.

    Missing history slots up to ``k`` are zero-filled so the output channel
    count stays ``C * (1 + k)``.
    """
    history = list(history)
    k = len(history) if k is None else int(k)
    if len(history) > k:
        raise ShapeMismatchError(f"{len(history)} history maps exceed k={k}")
    for h in history:
        if h.shape != current.shape:
            raise ShapeMismatchError(f"history map {h.shape} vs current {current.shape}")
    parts = [current.data] + [h.data for h in history]
    parts += [np.zeros_like(current.data)] * (k - len(history))
    return current.replace(np.concatenate(parts, axis=-1))


def channel_to_height(bev, z_bins):
    """Split C channels into ``z_bins`` contiguous groups: (H, W, C) -> (H, W, Z, C / Z)."""
    data = bev.data if isinstance(bev, BevFeatureMap) else np.asarray(bev)
    h, w, c = data.shape
    if z_bins < 1 or c % z_bins:
        raise IndivisibleChannelsError(f"{c} channels cannot split into {z_bins} height bins")
    return data.reshape(h, w, z_bins, c // z_bins)


def height_to_channel(vox):
    h, w, z, c = vox.shape
    return vox.reshape(h, w, z * c)
